// Command-line front end: run, extract, synth, report.
//
// Exit codes: 0 success, 2 usage/config/input errors, 3 too little data,
// 1 anything else.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "touchauth/error.hpp"
#include "touchauth/experiment.hpp"

namespace {

using namespace touchauth;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNoData = 3;

template <typename T, typename Parse>
std::vector<T> parse_list(const std::vector<std::string>& names, std::string_view what, Parse parse) {
    std::vector<T> out;
    for (const auto& n : names) {
        const auto v = parse(n);
        if (!v) {
            throw ConfigError(fmt::format("unknown {} '{}'", what, n));
        }
        out.push_back(*v);
    }
    return out;
}

struct RunArgs {
    std::string config;
    std::vector<std::string> inputs;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
    std::vector<std::string> families;
    std::vector<std::string> schemas;
    std::vector<std::string> approaches;
    std::string windows;
    std::string out;
    bool save_models = false;
    bool quiet = false;
};

void add_experiment_flags(CLI::App* cmd, RunArgs& a) {
    cmd->add_option("--config", a.config, "YAML experiment config");
    cmd->add_option("--input", a.inputs, "canonical stroke CSV (repeatable)");
    cmd->add_option("--seed", a.seed, "master seed");
    cmd->add_option("--workers", a.workers, "worker threads");
    cmd->add_option("--families", a.families, "KNN,SVM,RF,ET,GB")->delimiter(',');
    cmd->add_option("--schemas", a.schemas, "TA,WVW,Syed,BS,Cheng")->delimiter(',');
    cmd->add_option("--approaches", a.approaches, "Bi,Omni")->delimiter(',');
    cmd->add_option("--windows", a.windows, "fusion windows, e.g. 1-20 or 1,5,10");
    cmd->add_option("--out", a.out, "output directory");
}

ExperimentConfig resolve_config(const RunArgs& a) {
    ExperimentConfig c = a.config.empty() ? ExperimentConfig{} : load_config(a.config);
    if (!a.inputs.empty()) {
        c.inputs.assign(a.inputs.begin(), a.inputs.end());
        c.synthetic.reset();
    }
    if (a.seed) {
        c.master_seed = *a.seed;
    }
    if (a.workers) {
        c.workers = *a.workers;
    }
    if (!a.families.empty()) {
        c.families = parse_list<Family>(a.families, "family", parse_family);
    }
    if (!a.schemas.empty()) {
        c.schemas = parse_list<FeatureSet>(a.schemas, "schema", parse_feature_set);
    }
    if (!a.approaches.empty()) {
        c.approaches = parse_list<Approach>(a.approaches, "approach", parse_approach);
    }
    if (!a.windows.empty()) {
        c.windows = parse_windows(a.windows);
    }
    if (!a.out.empty()) {
        c.out_dir = a.out;
    }
    if (a.save_models) {
        c.save_models = true;
    }
    return c;
}

void print_stats(std::ostream& out, const DataStats& s) {
    fmt::print(out, "rows read: {} (skipped {})\n", s.rows_read, s.rows_skipped);
    fmt::print(out, "strokes parsed: {}\n", s.strokes_parsed);
    fmt::print(out, "removed clicks: {} ({} with <= 5 samples, {} with path < 3 px)\n",
               s.removed_few_points + s.removed_short_path, s.removed_few_points, s.removed_short_path);
    fmt::print(out, "removed non-finite: {}\n", s.nonfinite_dropped);
    fmt::print(out, "qualifying strokes: {}\n", s.qualifying_strokes);
    fmt::print(out, "eligible users: {} of {}\n", s.eligible_users, s.users_seen);
}

int cmd_run(const RunArgs& a) {
    const ExperimentConfig config = resolve_config(a);
    const auto result = run_experiment(config, a.quiet ? nullptr : &std::cerr);
    print_stats(std::cout, result.stats);
    fmt::print(std::cout, "fits logged: {} (expected {})\n", result.ledger.size(), result.expected_fits);
    for (const auto& [window, ranking] : result.report.rankings) {
        if (!ranking.empty()) {
            const auto& top = ranking.front();
            fmt::print(std::cout, "best at window {}: {} AUC {:.3f} EER {:.3f}\n", window, top.config.label(),
                       top.mean_auc, top.mean_eer);
        }
    }
    fmt::print(std::cout, "reports written to {}\n", config.out_dir.string());
    return kExitOk;
}

int cmd_extract(const RunArgs& a, const std::string& output) {
    ExperimentConfig config = resolve_config(a);
    validate_config(config);
    const PreparedData data = prepare_data(config);
    if (!output.empty()) {
        std::ofstream out(output, std::ios::binary);
        if (!out) {
            throw InputError(fmt::format("cannot write {}", output));
        }
        write_feature_csv(out, data.vectors);
    }
    print_stats(std::cout, data.stats);
    return kExitOk;
}

struct SynthArgs {
    SyntheticSpec spec;
    std::string out;
};

int cmd_synth(const SynthArgs& a) {
    if (a.spec.n_users < 2) {
        throw ConfigError("--users must be at least 2: one-vs-rest training needs impostors");
    }
    if (a.spec.train_per_direction == 0 || a.spec.test_per_direction == 0 || a.spec.separability < 0.0) {
        throw ConfigError("stroke counts must be positive and separability non-negative");
    }
    const Corpus corpus = generate_synthetic_corpus(a.spec);
    std::ofstream out(a.out, std::ios::binary);
    if (!out) {
        throw InputError(fmt::format("cannot write {}", a.out));
    }
    write_canonical_csv(out, corpus);
    fmt::print(std::cout, "{} strokes from {} users written to {}\n", corpus.strokes.size(), corpus.users.size(),
               a.out);
    return kExitOk;
}

int cmd_report(const std::string& run_dir, const std::string& out_dir, const std::string& windows) {
    std::optional<std::vector<int>> w;
    if (!windows.empty()) {
        w = parse_windows(windows);
    }
    const auto report = render_reports(run_dir, out_dir.empty() ? run_dir : out_dir, w);
    fmt::print(std::cout, "{} metric rows{}\n", report.rows.size(), report.partial ? " (partial)" : "");
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Touch-stroke continuous authentication experiments"};
    app.require_subcommand(1);

    RunArgs run_args;
    auto* run = app.add_subcommand("run", "full experiment: grid search, selection, scoring, reports");
    add_experiment_flags(run, run_args);
    run->add_flag("--save-models", run_args.save_models, "serialize every final model");
    run->add_flag("--quiet", run_args.quiet, "no progress output");

    RunArgs extract_args;
    std::string extract_output;
    auto* extract = app.add_subcommand("extract", "clean strokes and dump their feature vectors");
    add_experiment_flags(extract, extract_args);
    extract->add_option("--output", extract_output, "features CSV to write");

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "write a seeded synthetic corpus");
    synth->add_option("--users", synth_args.spec.n_users, "number of users");
    synth->add_option("--train", synth_args.spec.train_per_direction, "session A strokes per direction");
    synth->add_option("--test", synth_args.spec.test_per_direction, "session B strokes per direction");
    synth->add_option("--seed", synth_args.spec.seed, "generator seed");
    synth->add_option("--separability", synth_args.spec.separability, "spread between users");
    synth->add_option("--out", synth_args.out, "canonical CSV to write")->required();

    std::string report_run;
    std::string report_out;
    std::string report_windows;
    auto* report = app.add_subcommand("report", "re-render reports from a run's score ledger");
    report->add_option("--run", report_run, "directory of a finished run")->required();
    report->add_option("--out", report_out, "where to write reports (default: the run directory)");
    report->add_option("--windows", report_windows, "fusion windows (default: those of the run)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*run) {
            return cmd_run(run_args);
        }
        if (*extract) {
            return cmd_extract(extract_args, extract_output);
        }
        if (*synth) {
            return cmd_synth(synth_args);
        }
        return cmd_report(report_run, report_out, report_windows);
    } catch (const InsufficientDataError& e) {
        fmt::print(std::cerr, "error: {}\n", e.what());
        return kExitNoData;
    } catch (const ConfigError& e) {
        fmt::print(std::cerr, "config error: {}\n", e.what());
        return kExitUsage;
    } catch (const SchemaError& e) {
        fmt::print(std::cerr, "input error: {}\n", e.what());
        return kExitUsage;
    } catch (const InputError& e) {
        fmt::print(std::cerr, "input error: {}\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        fmt::print(std::cerr, "error: {}\n", e.what());
        return kExitFailure;
    }
}
