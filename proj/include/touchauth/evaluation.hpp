#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "touchauth/pipeline.hpp"

namespace touchauth {

struct ScoredStroke {
    std::string swipe_id;
    std::int64_t timestamp_ms = 0;
    Direction direction = Direction::Right;
    double probability = 0.0;
};

/// Probabilities one owner's models assign to one identity's session-B
/// strokes, in chronological order.
struct ScoreStream {
    std::string identity;
    std::string owner;
    std::vector<ScoredStroke> scores;

    bool genuine() const { return identity == owner; }
    std::vector<double> probabilities() const;
};

/// Scores `test` with the owner's models. Bidirectional routing sends each
/// stroke to the slot of its direction; the output is chronological
/// whichever slot produced each score.
ScoreStream score_test_strokes(const SlotModels& models, Approach approach, const FeatureSetSchema& schema,
                               const std::string& owner, const std::string& identity,
                               std::span<const FeatureVector* const> test);

/// Sliding mean with stride 1: out[i] = mean(p[i] .. p[i+n-1]). A stream
/// shorter than n yields an empty result.
std::vector<double> fuse_moving_average(std::span<const double> probabilities, int n);

/// P(genuine score > impostor score) with ties counting one half.
double auc(std::span<const double> genuine, std::span<const double> impostor);

struct RocPoint {
    double fpr;
    double tpr;
    double threshold; ///< accept when score >= threshold
};

/// One point per distinct score plus a leading +inf threshold, by
/// decreasing threshold: starts at (0, 0) and ends at (1, 1).
std::vector<RocPoint> roc_curve(std::span<const double> genuine, std::span<const double> impostor);

/// Error rate where FAR equals FRR, linearly interpolated between the two
/// ROC points that straddle the crossing.
double eer(std::span<const double> genuine, std::span<const double> impostor);

struct WilcoxonResult {
    std::size_t n_nonzero = 0;
    double w_plus = 0.0;
    double w_minus = 0.0;
    double statistic = 0.0; ///< min(W+, W-)
    double p_value = 1.0;   ///< two-sided
    bool exact = false;
    bool degenerate = false; ///< every difference was zero
    bool reject_at_5pct = false;
};

/// Largest number of non-zero differences that gets an exact p-value.
inline constexpr std::size_t kWilcoxonExactLimit = 25;

/// Paired two-sided test of a - b. Zero differences are dropped and tied
/// magnitudes share average ranks.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b);

struct ConfigKey {
    Family family = Family::ET;
    FeatureSet schema = FeatureSet::TA;
    Approach approach = Approach::Omnidirectional;

    auto operator<=>(const ConfigKey&) const = default;
    /// "ET/TA/Omni"
    std::string label() const;
};

/// Every identity's stream scored by one owner's models under one
/// configuration; the owner's own stream is the genuine one.
struct ConfigScores {
    ConfigKey config;
    std::string owner;
    std::vector<ScoreStream> streams;
};

struct UserWindowMetrics {
    std::string user_id;
    ConfigKey config;
    int window = 1;
    double auc = 0.0;
    double eer = 0.0;
    std::size_t n_genuine = 0;
    std::size_t n_impostor = 0;
};

struct AggregateMetrics {
    ConfigKey config;
    int window = 1;
    std::size_t n_users = 0;
    double mean_auc = 0.0;
    double std_auc = 0.0; ///< sample STD across users
    double mean_eer = 0.0;
    double std_eer = 0.0;
};

struct SignificanceEntry {
    int window = 1;
    ConfigKey reference;
    ConfigKey config;
    WilcoxonResult test;
};

struct MetricsReport {
    std::vector<int> windows;
    /// Sorted by (config, user, window).
    std::vector<UserWindowMetrics> rows;
    /// Sorted by (config, window).
    std::vector<AggregateMetrics> aggregates;
    /// Window -> configurations by decreasing mean AUC.
    std::map<int, std::vector<AggregateMetrics>> rankings;
    /// Each configuration against the top-ranked one, per ranking window.
    std::vector<SignificanceEntry> significance;
    bool partial = false;
    std::vector<std::string> warnings;
};

inline constexpr std::array<int, 2> kRankingWindows{1, 5};

/// Per-user metrics pool the owner's fused genuine stream against every
/// other identity's stream, each fused on its own.
MetricsReport aggregate_report(std::span<const ConfigScores> scores, std::span<const int> windows);

void write_metrics_csv(std::ostream& out, const MetricsReport& report);
void write_plot_csv(std::ostream& out, const MetricsReport& report);
void write_summary_json(std::ostream& out, const MetricsReport& report);

/// One row per scored stroke; enough to rebuild every report.
void write_scores_csv(std::ostream& out, std::span<const ConfigScores> scores);
std::vector<ConfigScores> read_scores_csv(std::istream& in);

} // namespace touchauth
