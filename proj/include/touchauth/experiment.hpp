#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "touchauth/evaluation.hpp"
#include "touchauth/features.hpp"
#include "touchauth/ingest.hpp"
#include "touchauth/pipeline.hpp"

namespace touchauth {

struct ExperimentConfig {
    std::vector<std::filesystem::path> inputs;
    InputFormat format = InputFormat::Canonical;
    /// Used instead of `inputs` when set.
    std::optional<SyntheticSpec> synthetic;
    std::uint64_t master_seed = 0;
    std::vector<Family> families{kAllFamilies.begin(), kAllFamilies.end()};
    std::vector<FeatureSet> schemas{kAllFeatureSets.begin(), kAllFeatureSets.end()};
    std::vector<Approach> approaches{kAllApproaches.begin(), kAllApproaches.end()};
    std::vector<int> windows = default_windows();
    Quotas quotas;
    CvPlan plan;
    unsigned workers = 1;
    std::filesystem::path out_dir = "out";
    bool save_models = false;

    static std::vector<int> default_windows();
};

/// Reads a YAML config. Unknown keys and malformed values raise ConfigError.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(std::string_view yaml_text);

/// Checks ranges and duplicates; raises ConfigError.
void validate_config(const ExperimentConfig& config);

/// "1-20", "1,5,10" or a mix such as "1-3,10".
std::vector<int> parse_windows(std::string_view text);

struct DataStats {
    std::size_t rows_read = 0;
    std::size_t rows_skipped = 0;
    std::size_t strokes_parsed = 0;
    std::size_t removed_few_points = 0;
    std::size_t removed_short_path = 0;
    std::size_t nonfinite_dropped = 0;
    std::size_t qualifying_strokes = 0; ///< after click and non-finite cleaning
    std::size_t users_seen = 0;
    std::size_t eligible_users = 0;
    std::vector<ExclusionRecord> excluded;
};

struct PreparedData {
    DataStats stats;
    std::vector<FeatureVector> vectors; ///< every qualifying stroke
    std::vector<UserFeatures> users;    ///< eligible users
};

/// Ingest, click filtering, feature extraction, non-finite cleaning and
/// eligibility selection. Unreadable inputs raise InputError or
/// SchemaError; no user check is made here.
PreparedData prepare_data(const ExperimentConfig& config);

struct SelectionRecord {
    std::string user_id;
    FeatureSet schema = FeatureSet::TA;
    Family family = Family::ET;
    Slot slot = Slot::Omni;
    SelectedParams selected;
    double best_mean_auc = 0.0;
};

struct ExperimentResult {
    DataStats stats;
    std::vector<std::string> users;
    std::vector<FitRecord> ledger;
    std::size_t expected_fits = 0;
    std::vector<SelectionRecord> selections;
    std::vector<ConfigScores> scores;
    MetricsReport report;
};

/// Runs the whole experiment and writes every artifact into
/// config.out_dir. Fewer than two eligible users raise
/// InsufficientDataError before anything is written.
ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

/// Names of the report files written by run_experiment and render_reports.
inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kSummaryFile = "summary.json";
inline constexpr const char* kPlotFile = "plot_data.csv";
inline constexpr const char* kScoresFile = "scores.csv";
inline constexpr const char* kLedgerFile = "ledger.csv";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kSelectionFile = "selection.csv";
inline constexpr const char* kGridFile = "grid.csv";

void write_reports(const std::filesystem::path& dir, const MetricsReport& report);

/// Rebuilds the reports of a finished run from its score ledger. Windows
/// default to those recorded in the run's manifest.
MetricsReport render_reports(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir,
                             std::optional<std::vector<int>> windows = std::nullopt);

} // namespace touchauth
