#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "touchauth/matrix.hpp"

namespace touchauth {

enum class Family { KNN, SVM_RBF, RF, ET, GB };

inline constexpr std::array<Family, 5> kAllFamilies{Family::KNN, Family::SVM_RBF, Family::RF, Family::ET, Family::GB};

const char* to_string(Family f);
std::optional<Family> parse_family(std::string_view s);

bool is_tree_family(Family f);
/// KNN and SVM work on scaled features; tree ensembles do not.
bool uses_scaler(Family f);

inline constexpr double kGbLearningRate = 0.1;
inline constexpr int kGbMaxDepth = 3;
inline constexpr double kGbSubsample = 0.95;
inline constexpr double kSvmTolerance = 1e-3;

struct ClassifierSpec {
    Family family = Family::ET;
    int k = 5;                                 // KNN
    double C = 1.0;                            // SVM_RBF
    int n_estimators = 100;                    // RF, ET, GB
    double min_samples_split_fraction = 0.005; // RF, ET, GB
    double subsample = kGbSubsample;           // GB
    std::uint64_t seed = 0;

    bool operator==(const ClassifierSpec&) const = default;
};

/// Parameter grid of a family, each point with default seed.
std::vector<ClassifierSpec> parameter_grid(Family family);

/// Strict "a is a simpler model than b" order used for parameter
/// selection: smaller k, smaller C, or fewer trees then a larger minimum
/// split fraction.
bool less_complex(const ClassifierSpec& a, const ClassifierSpec& b);

/// Short human-readable parameter label, e.g. "k=3" or "n=100;split=0.005".
std::string param_label(const ClassifierSpec& spec);

/// max(2, ceil(fraction * n_train)).
std::size_t min_split_size(double fraction, std::size_t n_train);

// ---------------------------------------------------------------------------
// Scaling: z-score then min-max, both fitted on training data only.

struct ScalerParams {
    std::vector<double> mean;
    std::vector<double> std;
    std::vector<double> min; ///< of the standardized training column
    std::vector<double> max;
};

ScalerParams fit_scaler(const Matrix& train);
Matrix apply_scaler(const ScalerParams& params, const Matrix& x);

// ---------------------------------------------------------------------------
// Fitted state

struct TreeNode {
    int feature = -1; ///< -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0; ///< leaf output

    bool operator==(const TreeNode&) const = default;
};

struct Tree {
    std::vector<TreeNode> nodes;

    double predict(std::span<const double> row) const {
        int i = 0;
        while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
            const auto& n = nodes[static_cast<std::size_t>(i)];
            i = row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(i)].value;
    }
    std::size_t depth() const;
    bool operator==(const Tree&) const = default;
};

struct KnnState {
    Matrix train;
    std::vector<int> labels;
};

struct SvmState {
    Matrix support_vectors;
    std::vector<double> coef; ///< alpha_i * y_i
    double rho = 0.0;         ///< decision = sum coef_i K(sv_i, x) - rho
    double gamma = 1.0;
    double platt_a = 0.0;
    double platt_b = 0.0;
    /// Full dual solution, kept for diagnostics.
    std::vector<double> alpha;
    std::vector<int> y_signed;
    std::size_t iterations = 0;
};

struct ForestState {
    std::vector<Tree> trees;
};

struct BoostState {
    double init_score = 0.0;
    std::vector<Tree> trees; ///< leaf values already scaled by the learning rate
    /// Mean logistic loss on the full training set after each stage.
    std::vector<double> train_loss;
};

struct TrainedModel {
    ClassifierSpec spec;
    std::optional<ScalerParams> scaler;
    std::size_t n_features = 0;
    std::variant<KnnState, SvmState, ForestState, BoostState> state;
};

/// y holds 1 for genuine and 0 for impostor samples. Scaled families fit
/// their scaler on `x` unless `preset_scaler` is given.
TrainedModel fit(const ClassifierSpec& spec, const Matrix& x, std::span<const int> y,
                 const ScalerParams* preset_scaler = nullptr);

/// Probability of the genuine class for every row.
std::vector<double> predict_proba(const TrainedModel& model, const Matrix& x);

/// For tree ensembles: probabilities using only the first n trees (or
/// boosting stages) for each n in `stages`. A forest grown with n trees
/// is exactly the first n trees of a larger forest with the same seed.
std::vector<std::vector<double>> predict_proba_staged(const TrainedModel& model, const Matrix& x,
                                                      std::span<const int> stages);

/// Signed SVM margin for every row (before the logistic link).
std::vector<double> svm_decision(const TrainedModel& model, const Matrix& x);

struct Neighbor {
    std::size_t index;
    double distance;
};

/// The k nearest training rows of an already scaled query, ties by index.
std::vector<Neighbor> knn_neighbors(const KnnState& state, std::span<const double> query, int k);

void save_model(std::ostream& out, const TrainedModel& model);
TrainedModel load_model(std::istream& in);

} // namespace touchauth
