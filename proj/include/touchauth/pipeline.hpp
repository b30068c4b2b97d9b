#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "touchauth/classifiers.hpp"
#include "touchauth/features.hpp"
#include "touchauth/ingest.hpp"

namespace touchauth {

enum class Approach { Bidirectional, Omnidirectional };

inline constexpr std::array<Approach, 2> kAllApproaches{Approach::Bidirectional, Approach::Omnidirectional};

const char* to_string(Approach a);
std::optional<Approach> parse_approach(std::string_view s);

/// One per-user model. Hs covers Left and Right strokes, Vs covers Up and
/// Down, Omni covers all four directions.
enum class Slot { Hs, Vs, Omni };

const char* to_string(Slot s);
std::optional<Slot> parse_slot(std::string_view s);

std::vector<Slot> slots_for(Approach approach);
std::vector<Direction> slot_directions(Slot slot);
Slot slot_for(Approach approach, Direction direction);

/// Distinct slots needed by a set of approaches, in Hs, Vs, Omni order.
std::vector<Slot> slots_for(std::span<const Approach> approaches);

/// An eligible user's cleaned feature vectors, by direction and in
/// chronological order. Session A trains, session B tests.
struct UserFeatures {
    std::string user_id;
    std::array<std::vector<FeatureVector>, 4> train;
    std::array<std::vector<FeatureVector>, 4> test;

    /// Training vectors of a slot: its directions in Left, Right, Up, Down
    /// order, each chronological.
    std::vector<const FeatureVector*> slot_train(Slot slot) const;
    /// Every test vector sorted chronologically across directions.
    std::vector<const FeatureVector*> test_stream() const;
};

/// Pairs each selected stroke with its feature vector by (user, swipe id).
/// A selected stroke without a vector raises InputError.
std::vector<UserFeatures> attach_features(std::span<const UserSubset> subsets,
                                          std::span<const FeatureVector> vectors);

struct CvPlan {
    int folds = 5;
    int repeats = 5;

    int fits_per_point() const { return folds * repeats; }
};

/// Identifies one grid search; every seed is derived from it.
struct TaskKey {
    std::uint64_t master_seed = 0;
    std::string user_id;
    FeatureSet schema = FeatureSet::TA;
    Family family = Family::ET;
    Slot slot = Slot::Omni;
};

/// Seeds of the randomized steps. None depends on the number of trees, so
/// a forest of n trees is exactly the first n trees of a larger forest.
std::uint64_t undersample_seed(std::uint64_t master_seed, const std::string& user_id, Slot slot);
std::uint64_t fold_seed(std::uint64_t master_seed, const std::string& user_id, Slot slot, int repeat);
std::uint64_t fit_seed(const TaskKey& key, const ClassifierSpec& point, int repeat, int fold);
std::uint64_t final_fit_seed(const TaskKey& key);

struct OvrTrainingSet {
    Matrix x;
    std::vector<int> y; ///< genuine rows first, then impostors
    std::vector<std::string> row_owner;
};

/// Genuine class: the target's slot training vectors. Impostor class: a
/// seeded sample, without replacement, of every other user's slot training
/// vectors, exactly as large as the genuine class.
OvrTrainingSet build_ovr_training_set(const std::string& target_user, Slot slot, std::span<const UserFeatures> users,
                                      const FeatureSetSchema& schema, std::uint64_t seed);

struct FoldSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};

/// Stratified k-fold split of one repeat: each class is shuffled and dealt
/// round-robin into the folds. Indices are ascending within each part.
std::vector<FoldSplit> stratified_folds(std::span<const int> y, int folds, std::uint64_t seed);

struct GridPointResult {
    ClassifierSpec spec; ///< seed field unused
    std::vector<double> fold_auc; ///< repeat-major, folds * repeats entries
    double mean_auc = 0.0;
    double std_auc = 0.0; ///< population STD over the fold scores
    double fit_seconds = 0.0;
    double predict_seconds = 0.0;
};

struct GridResult {
    Family family = Family::ET;
    std::vector<GridPointResult> points; ///< parameter_grid(family) order
};

/// One row of the run ledger.
struct FitRecord {
    std::string user_id;
    FeatureSet schema = FeatureSet::TA;
    Family family = Family::ET;
    Slot slot = Slot::Omni;
    std::string params;
    int repeat = 0;
    int fold = 0;
    double auc = 0.0;
    double fit_seconds = 0.0;
};

enum class ScalerScope {
    Fold,          ///< scaler fitted on each training fold (the pipeline's behavior)
    FullTrainingSet ///< leaky reference path, only for checking that Fold is used
};

struct GridSearchOptions {
    unsigned workers = 1;
    /// Tree families grow the largest forest once per fold and score every
    /// smaller forest from its prefix; identical to separate fits.
    bool share_tree_prefixes = true;
    ScalerScope scaler_scope = ScalerScope::Fold;
};

/// Scores every grid point of `key.family` on the same folds. Results are
/// identical for any worker count. When `ledger` is given, one record per
/// (point, repeat, fold) is appended in grid order.
GridResult run_grid_search(const Matrix& x, std::span<const int> y, const TaskKey& key, const CvPlan& plan,
                           const GridSearchOptions& options = {}, std::vector<FitRecord>* ledger = nullptr);

struct SelectedParams {
    ClassifierSpec spec;
    std::size_t point_index = 0;
    double threshold = 0.0;
    std::size_t mask_size = 0;
    double mean_auc = 0.0;
};

/// threshold = best mean AUC - STD of that best point; the least complex
/// point at or above the threshold wins. Ties for the best mean go to the
/// earlier grid point.
SelectedParams select_params_one_std(const GridResult& result);

using SlotModels = std::map<Slot, TrainedModel>;

/// One model per slot of `approach`, fitted on the full balanced training
/// set with that slot's selected parameters.
SlotModels train_final_models(const std::string& user_id, Approach approach, std::span<const UserFeatures> users,
                              const FeatureSetSchema& schema, Family family,
                              const std::map<Slot, SelectedParams>& selected, std::uint64_t master_seed);

/// Fits one grid search logs: sum over families of |grid| * folds * repeats,
/// times users * schemas * slots.
std::size_t expected_fit_count(std::span<const Family> families, std::size_t n_users, std::size_t n_schemas,
                               std::size_t n_slots, const CvPlan& plan = {});

void write_ledger_header(std::ostream& out);
void write_ledger_rows(std::ostream& out, std::span<const FitRecord> records);

} // namespace touchauth
