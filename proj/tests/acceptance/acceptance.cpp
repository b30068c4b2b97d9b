// Acceptance checks. Prints one PASS/FAIL/SKIPPED line per criterion and
// exits non-zero when any criterion fails.
//
//   acceptance                 criteria 1 (5-user smoke) through 7
//   acceptance --full --only 1 the 35-user enumeration run
//
// Criterion 7 runs only when TOUCHAUTH_DATASET names the original stroke
// data in canonical CSV form.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "oracles.hpp"
#include "support.hpp"
#include "touchauth/evaluation.hpp"
#include "touchauth/experiment.hpp"
#include "touchauth/stats.hpp"

namespace fs = std::filesystem;
using namespace touchauth;

namespace {

// Pinned tolerances and targets.
constexpr std::size_t kSmokeFits = 33'750;
constexpr std::size_t kFullFits = 236'250;
constexpr double kSmokeTimeLimitSeconds = 15 * 60;
constexpr int kOracleInstances = 1000;
constexpr double kEerTolerance = 1e-9;
constexpr double kWilcoxonTolerance = 1e-12;
constexpr int kSelectionCases = 1000;
constexpr int kFeatureStrokes = 10'000;
constexpr double kFeatureRelTol = 1e-9;
constexpr double kFeatureAbsTol = 1e-9;
constexpr double kSeparableAucWindow1 = 0.90;
constexpr double kSeparableAucWindow5 = 0.97;
constexpr double kChanceAucLow = 0.4;
constexpr double kChanceAucHigh = 0.6;
constexpr double kFusionVarianceTolerance = 0.20;
constexpr std::size_t kDatasetUsers = 35;
constexpr std::size_t kDatasetStrokes = 78'423;
constexpr double kDatasetAucTolerance = 0.03;

struct Outcome {
    enum Kind { Pass, Fail, Skipped } kind;
    std::string detail;
};

Outcome verdict(bool ok, std::string detail) { return {ok ? Outcome::Pass : Outcome::Fail, std::move(detail)}; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::size_t data_lines(const fs::path& p) {
    const std::string s = slurp(p);
    const auto n = static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
    return n == 0 ? 0 : n - 1;
}

/// The ledger without its wall-clock column.
std::string ledger_without_timings(const fs::path& p) {
    std::istringstream in(slurp(p));
    std::string out;
    std::string line;
    while (std::getline(in, line)) {
        out += line.substr(0, line.rfind(','));
        out += '\n';
    }
    return out;
}

ExperimentConfig enumeration_config(std::size_t users, const fs::path& out, unsigned workers) {
    ExperimentConfig c;
    c.synthetic = SyntheticSpec{.n_users = users, .seed = 2024};
    c.master_seed = 7;
    c.families = {Family::ET};
    c.workers = workers;
    c.out_dir = out;
    return c;
}

Outcome enumeration(std::size_t users, std::size_t expected, const fs::path& out, unsigned workers,
                    double time_limit) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto result = run_experiment(enumeration_config(users, out, workers));
    const double elapsed = seconds_since(t0);
    const std::size_t logged = data_lines(out / kLedgerFile);
    const bool ok = logged == expected && result.ledger.size() == expected && result.expected_fits == expected &&
                    elapsed <= time_limit;
    return verdict(ok, fmt::format("{} users, ET x 5 schemas x 3 slots: {} fits in the ledger, expected {}; {:.0f} s "
                                   "with {} worker(s) (limit {:.0f} s)",
                                   users, logged, expected, elapsed, workers, time_limit));
}

std::vector<double> random_scores(Rng& rng, std::size_t n, double shift, bool coarse) {
    std::vector<double> out(n);
    for (auto& v : out) {
        v = coarse ? static_cast<double>(rng.below(12)) / 12.0 : rng.uniform() + shift;
    }
    return out;
}

Outcome metric_oracles() {
    Rng rng(20240917);
    int auc_bad = 0;
    int eer_bad = 0;
    double eer_worst = 0.0;
    for (int t = 0; t < kOracleInstances; ++t) {
        const bool coarse = t % 2 == 0;
        const auto g = random_scores(rng, 1 + rng.below(100), 0.15, coarse);
        const auto i = random_scores(rng, 1 + rng.below(100), 0.0, coarse);
        auc_bad += auc(g, i) == oracle::auc(g, i) ? 0 : 1;
        const double diff = std::abs(eer(g, i) - oracle::eer(g, i));
        eer_worst = std::max(eer_worst, diff);
        eer_bad += diff <= kEerTolerance ? 0 : 1;
    }
    int wil_bad = 0;
    double wil_worst = 0.0;
    for (int t = 0; t < kOracleInstances; ++t) {
        const std::size_t n = 1 + static_cast<std::size_t>(t % 10);
        std::vector<double> d(n);
        for (auto& v : d) {
            v = static_cast<double>(1 + rng.below(5)) * (rng.below(2) == 0 ? 1.0 : -1.0);
        }
        const std::vector<double> zero(n, 0.0);
        const auto got = wilcoxon_signed_rank(d, zero);
        const auto want = oracle::signed_rank_enumerated(d);
        const double diff = std::abs(got.p_value - want.p_value);
        wil_worst = std::max(wil_worst, diff);
        wil_bad += got.exact && got.statistic == want.statistic && diff <= kWilcoxonTolerance ? 0 : 1;
    }
    return verdict(auc_bad == 0 && eer_bad == 0 && wil_bad == 0,
                   fmt::format("{} instances each: AUC mismatches {} (exact); EER mismatches {} (max diff {:.2e}, tol "
                               "{:.0e}); Wilcoxon n<=10 mismatches {} (max diff {:.2e})",
                               kOracleInstances, auc_bad, eer_bad, eer_worst, kEerTolerance, wil_bad, wil_worst));
}

Outcome selection_property() {
    Rng rng(31337);
    int bad = 0;
    for (int t = 0; t < kSelectionCases; ++t) {
        const Family family = kAllFamilies[rng.below(kAllFamilies.size())];
        GridResult r;
        r.family = family;
        for (const auto& spec : parameter_grid(family)) {
            GridPointResult p;
            p.spec = spec;
            p.mean_auc = 0.5 + static_cast<double>(rng.below(25)) / 50.0;
            p.std_auc = static_cast<double>(rng.below(6)) / 40.0;
            r.points.push_back(p);
        }
        const auto got = select_params_one_std(r);
        const auto want = oracle::one_std_choice(r);
        const bool above = got.mean_auc >= want.threshold;
        bad += got.point_index == want.index && got.mask_size == want.mask_size && above ? 0 : 1;
    }
    return verdict(bad == 0, fmt::format("{} random grids: {} disagreements with the brute-force masker",
                                         kSelectionCases, bad));
}

Outcome feature_invariants() {
    using touchauth::testing::close;
    Rng rng(777);
    std::size_t translation = 0;
    std::size_t time_shift = 0;
    std::size_t ratio = 0;
    std::size_t mrl = 0;
    std::size_t deviation = 0;
    for (int t = 0; t < kFeatureStrokes; ++t) {
        const Stroke s = touchauth::testing::random_grid_stroke(rng);
        const Stroke prev = touchauth::testing::random_grid_stroke(rng, 0);
        const auto dx = static_cast<double>(static_cast<int>(rng.below(2000)) - 1000);
        const auto dy = static_cast<double>(static_cast<int>(rng.below(2000)) - 1000);
        const auto dt = static_cast<std::int64_t>(rng.below(10'000'000));
        const auto base = extract_features(s, &prev);
        const Stroke moved_prev = touchauth::testing::translated(prev, dx, dy, 0);
        const Stroke later_prev = touchauth::testing::translated(prev, 0, 0, dt);
        const auto moved = extract_features(touchauth::testing::translated(s, dx, dy, 0), &moved_prev);
        const auto later = extract_features(touchauth::testing::translated(s, 0, 0, dt), &later_prev);
        for (int i = 1; i <= static_cast<int>(kFeatureCount); ++i) {
            if (!touchauth::testing::position_dependent(i) &&
                !close(base.at(i), moved.at(i), kFeatureRelTol, kFeatureAbsTol)) {
                ++translation;
            }
            if (!close(base.at(i), later.at(i), kFeatureRelTol, kFeatureAbsTol)) {
                ++time_shift;
            }
        }
        ratio += base.at(24) > 0.0 && base.at(24) <= 1.0 + 1e-12 ? 0 : 1;
        mrl += base.at(8) >= 0.0 && base.at(8) <= 1.0 + 1e-12 ? 0 : 1;

        const auto line = extract_features(touchauth::testing::random_collinear_stroke(rng), nullptr);
        for (int i : {18, 19, 20, 21}) {
            deviation += std::abs(line.at(i)) <= kFeatureAbsTol ? 0 : 1;
        }
    }
    const std::size_t total = translation + time_shift + ratio + mrl + deviation;
    return verdict(total == 0,
                   fmt::format("{} random strokes + {} collinear strokes: violations translation {}, time shift {}, "
                               "ratio {}, mean resultant length {}, collinear deviation {}",
                               kFeatureStrokes, kFeatureStrokes, translation, time_shift, ratio, mrl, deviation));
}

ExperimentConfig sanity_config(double separability, const fs::path& out, unsigned workers) {
    ExperimentConfig c;
    c.synthetic = SyntheticSpec{.n_users = 10, .seed = 99, .separability = separability};
    c.master_seed = 3;
    c.families = {Family::ET};
    c.schemas = {FeatureSet::TA};
    c.windows = {1, 5};
    c.workers = workers;
    c.out_dir = out;
    return c;
}

double aggregate_auc(const MetricsReport& r, Approach approach, int window) {
    for (const auto& a : r.aggregates) {
        if (a.config.approach == approach && a.window == window) {
            return a.mean_auc;
        }
    }
    return std::nan("");
}

Outcome pipeline_sanity(const fs::path& work, unsigned workers) {
    const auto separable = run_experiment(sanity_config(3.0, work / "separable", workers)).report;
    const auto chance = run_experiment(sanity_config(0.0, work / "chance", workers)).report;
    bool ok = true;
    std::string detail;
    for (Approach a : kAllApproaches) {
        const double w1 = aggregate_auc(separable, a, 1);
        const double w5 = aggregate_auc(separable, a, 5);
        const double c1 = aggregate_auc(chance, a, 1);
        ok = ok && w1 >= kSeparableAucWindow1 && w5 >= kSeparableAucWindow5 && c1 >= kChanceAucLow &&
             c1 <= kChanceAucHigh;
        detail += fmt::format("{}: sep 3 AUC {:.4f} @1 (>= {}), {:.4f} @5 (>= {}); sep 0 AUC {:.4f} @1 (in [{}, {}]); ",
                              to_string(a), w1, kSeparableAucWindow1, w5, kSeparableAucWindow5, c1, kChanceAucLow,
                              kChanceAucHigh);
    }

    Rng rng(8);
    std::vector<double> stream(100'000);
    for (auto& v : stream) {
        v = rng.uniform();
    }
    const double var = std::pow(stats::stddev(stream, 1), 2);
    double worst = 0.0;
    for (int n = 2; n <= 20; ++n) {
        const double fused = std::pow(stats::stddev(fuse_moving_average(stream, n), 1), 2);
        worst = std::max(worst, std::abs(fused / (var / n) - 1.0));
    }
    ok = ok && worst <= kFusionVarianceTolerance;
    detail += fmt::format("fused variance vs sigma^2/n, n=2..20: worst deviation {:.1f}% (limit {:.0f}%)",
                          100.0 * worst, 100.0 * kFusionVarianceTolerance);
    return verdict(ok, detail);
}

std::vector<std::string> differing_outputs(const fs::path& a, const fs::path& b) {
    std::vector<std::string> diff;
    for (const char* f : {kMetricsFile, kSummaryFile, kPlotFile, kScoresFile, kSelectionFile}) {
        if (slurp(a / f) != slurp(b / f) || slurp(a / f).empty()) {
            diff.emplace_back(f);
        }
    }
    if (ledger_without_timings(a / kLedgerFile) != ledger_without_timings(b / kLedgerFile)) {
        diff.emplace_back(kLedgerFile);
    }
    return diff;
}

Outcome determinism(const fs::path& smoke_run, const fs::path& work) {
    // Second smoke run: same seeds, eight workers.
    run_experiment(enumeration_config(5, work / "smoke-w8", 8));
    auto diff = differing_outputs(smoke_run, work / "smoke-w8");

    // Every family on a small corpus, twice with one worker and once with eight.
    auto small = [&](const fs::path& out, unsigned workers) {
        ExperimentConfig c;
        c.synthetic = SyntheticSpec{.n_users = 4, .train_per_direction = 55, .test_per_direction = 35, .seed = 12};
        c.master_seed = 21;
        c.schemas = {FeatureSet::Syed};
        c.plan = {.folds = 5, .repeats = 2};
        c.workers = workers;
        c.out_dir = out;
        run_experiment(c);
    };
    small(work / "all-a", 1);
    small(work / "all-b", 1);
    small(work / "all-w8", 8);
    for (const auto& f : differing_outputs(work / "all-a", work / "all-b")) {
        diff.push_back("all-families repeat: " + f);
    }
    for (const auto& f : differing_outputs(work / "all-a", work / "all-w8")) {
        diff.push_back("all-families workers: " + f);
    }
    std::string listed;
    for (const auto& d : diff) {
        listed += (listed.empty() ? "" : ", ") + d;
    }
    return verdict(diff.empty(), fmt::format("smoke run with 1 vs 8 workers and all-family run repeated and with 8 "
                                             "workers: {}",
                                             diff.empty() ? "reports byte-identical" : "differences in " + listed));
}

Outcome original_dataset(const fs::path& work, unsigned workers) {
    const char* path = std::getenv("TOUCHAUTH_DATASET");
    if (path == nullptr || *path == '\0') {
        return {Outcome::Skipped, "TOUCHAUTH_DATASET not set; the original stroke data is not bundled"};
    }
    ExperimentConfig c;
    c.inputs = {path};
    c.windows = {1, 5, 10};
    c.workers = workers;
    c.out_dir = work / "dataset";
    const auto result = run_experiment(c);
    const auto& r = result.report;

    const ConfigKey et_ta_omni{Family::ET, FeatureSet::TA, Approach::Omnidirectional};
    auto find = [&](const ConfigKey& k, int w) -> const AggregateMetrics* {
        for (const auto& a : r.aggregates) {
            if (a.config == k && a.window == w) {
                return &a;
            }
        }
        return nullptr;
    };
    const auto& best1 = r.rankings.at(1).front();
    const auto* at5 = find(et_ta_omni, 5);
    const auto* at10 = find(et_ta_omni, 10);
    const bool counts = result.stats.eligible_users == kDatasetUsers && result.stats.qualifying_strokes == kDatasetStrokes;
    const bool top = best1.config.family == Family::ET && std::abs(best1.mean_auc - 0.833) <= kDatasetAucTolerance;
    const bool five = at5 != nullptr && std::abs(at5->mean_auc - 0.890) <= kDatasetAucTolerance;
    const bool ten = at10 != nullptr && std::abs(at10->mean_auc - 0.905) <= kDatasetAucTolerance &&
                     std::abs(at10->mean_eer - 0.159) <= kDatasetAucTolerance;
    return verdict(counts && top && five && ten,
                   fmt::format("users {} (want {}), strokes {} (want {}); best @1 {} AUC {:.3f} (want ET, 0.833); "
                               "ET/TA/Omni @5 AUC {:.3f} (want 0.890); @10 AUC {:.3f} EER {:.3f} (want 0.905/0.159); "
                               "tolerance {}",
                               result.stats.eligible_users, kDatasetUsers, result.stats.qualifying_strokes,
                               kDatasetStrokes, best1.config.label(), best1.mean_auc, at5 ? at5->mean_auc : NAN,
                               at10 ? at10->mean_auc : NAN, at10 ? at10->mean_eer : NAN, kDatasetAucTolerance));
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    bool full = false;
    unsigned workers = 1;
    std::string work_dir = (fs::temp_directory_path() / "touchauth-acceptance").string();
    std::vector<int> only;
    app.add_flag("--full", full, "criterion 1 on the 35-user corpus instead of the 5-user smoke corpus");
    app.add_option("--workers", workers, "worker threads for the experiment runs");
    app.add_option("--work-dir", work_dir, "scratch directory for run outputs");
    app.add_option("--only", only, "criteria to run")->delimiter(',');
    CLI11_PARSE(app, argc, argv);

    const fs::path work = fs::path(work_dir) / (full ? "full" : "standard");
    fs::remove_all(work);
    fs::create_directories(work);
    const std::set<int> selected(only.begin(), only.end());
    auto wanted = [&](int c) { return selected.empty() || selected.count(c) > 0; };

    int failures = 0;
    auto report = [&](int id, const std::string& name, const Outcome& o) {
        const char* tag = o.kind == Outcome::Pass ? "PASS" : o.kind == Outcome::Fail ? "FAIL" : "SKIPPED";
        failures += o.kind == Outcome::Fail ? 1 : 0;
        std::cout << fmt::format("[{}] {} {}: {}", tag, id, name, o.detail) << std::endl;
    };
    auto guarded = [&](int id, const std::string& name, auto&& check) {
        if (!wanted(id)) {
            return;
        }
        try {
            report(id, name, check());
        } catch (const std::exception& e) {
            report(id, name, {Outcome::Fail, std::string("threw: ") + e.what()});
        }
    };

    const fs::path smoke = work / "smoke";
    guarded(1, full ? "enumeration fidelity (35 users)" : "enumeration fidelity (5-user smoke)", [&] {
        return full ? enumeration(35, kFullFits, work / "full-run", workers, std::numeric_limits<double>::infinity())
                    : enumeration(5, kSmokeFits, smoke, workers, kSmokeTimeLimitSeconds);
    });
    if (full) {
        return failures == 0 ? 0 : 1;
    }
    guarded(2, "metric oracles", metric_oracles);
    guarded(3, "one-STD selection rule", selection_property);
    guarded(4, "feature invariants", feature_invariants);
    guarded(5, "pipeline sanity on synthetic data", [&] { return pipeline_sanity(work, workers); });
    guarded(6, "determinism", [&] {
        if (!fs::exists(smoke / kLedgerFile)) {
            run_experiment(enumeration_config(5, smoke, 1));
        }
        return determinism(smoke, work);
    });
    guarded(7, "original dataset (conditional)", [&] { return original_dataset(work, workers); });
    return failures == 0 ? 0 : 1;
}
