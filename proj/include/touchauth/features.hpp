#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "touchauth/ingest.hpp"

namespace touchauth {

inline constexpr std::size_t kFeatureCount = 76;

/// One catalogue entry; `index` is 1-based.
struct FeatureId {
    int index;
    std::string_view name;
};

/// All 76 features in catalogue order.
const std::array<FeatureId, kFeatureCount>& feature_catalogue();

/// Looks up a feature by its exact catalogue name.
std::optional<FeatureId> feature_by_name(std::string_view name);

enum class FeatureSet { TA, WVW, Syed, BS, Cheng };

inline constexpr std::array<FeatureSet, 5> kAllFeatureSets{FeatureSet::TA, FeatureSet::WVW, FeatureSet::Syed,
                                                          FeatureSet::BS, FeatureSet::Cheng};

const char* to_string(FeatureSet s);
std::optional<FeatureSet> parse_feature_set(std::string_view s);

struct FeatureSetSchema {
    FeatureSet name;
    /// 1-based catalogue indices, ascending.
    std::vector<int> members;
};

const FeatureSetSchema& schema(FeatureSet set);

/// Union of every schema's members.
const std::vector<int>& all_schema_members();

struct KinematicsSeries {
    std::vector<double> velocity;      ///< px/s, one per gap
    std::vector<double> acceleration;  ///< px/s^2, one per consecutive gap pair
    std::vector<double> deviation;     ///< px, perpendicular distance of each sample from the E2E line
    std::vector<double> angle;         ///< radians, atan2 of each gap
    std::vector<double> gap_seconds;
};

KinematicsSeries compute_kinematics(const Stroke& stroke);

struct StrokeRef {
    std::string user_id;
    std::string swipe_id;
    Session session = Session::A;
    Direction direction = Direction::Right;
    std::int64_t start_ms = 0;
};

struct FeatureVector {
    StrokeRef stroke;
    std::array<double, kFeatureCount> values{};

    /// Value of the 1-based catalogue feature.
    double at(int index) const { return values[static_cast<std::size_t>(index - 1)]; }
};

/// `prev` is the same user's immediately preceding stroke in the same
/// session; without it the inter-stroke features are NaN.
FeatureVector extract_features(const Stroke& stroke, const Stroke* prev);

/// Extracts every stroke, linking each to its predecessor within
/// (user, session). Expects `corpus` in make_corpus order.
std::vector<FeatureVector> extract_corpus(const Corpus& corpus, unsigned workers = 1);

std::vector<double> project(const FeatureVector& fv, const FeatureSetSchema& schema);

/// Keeps a vector only if every member of every schema is finite, so all
/// feature sets see the same stroke population.
std::vector<FeatureVector> clean_nonfinite(std::span<const FeatureVector> vectors);

/// Header `user_id,swipe_id,session,direction,f1..f76`; non-finite values
/// are written as empty cells.
void write_feature_csv(std::ostream& out, std::span<const FeatureVector> vectors);

} // namespace touchauth
