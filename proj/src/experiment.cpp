#include "touchauth/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <mutex>
#include <ostream>
#include <set>
#include <unordered_set>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include "touchauth/error.hpp"
#include "touchauth/parallel.hpp"

namespace touchauth {

std::vector<int> ExperimentConfig::default_windows() {
    std::vector<int> w(20);
    for (int i = 0; i < 20; ++i) {
        w[static_cast<std::size_t>(i)] = i + 1;
    }
    return w;
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

int parse_int(std::string_view s, std::string_view what) {
    int value = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ConfigError(fmt::format("{}: '{}' is not an integer", what, s));
    }
    return value;
}

template <typename T, typename Parse>
std::vector<T> parse_names(const YAML::Node& node, std::string_view what, Parse parse) {
    std::vector<std::string> names;
    if (node.IsScalar()) {
        names.push_back(node.as<std::string>());
    } else if (node.IsSequence()) {
        for (const auto& item : node) {
            names.push_back(item.as<std::string>());
        }
    } else {
        throw ConfigError(fmt::format("{} must be a name or a list of names", what));
    }
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

template <typename T>
T scalar(const YAML::Node& node, std::string_view key) {
    try {
        return node.as<T>();
    } catch (const YAML::Exception&) {
        throw ConfigError(fmt::format("{} has an invalid value", key));
    }
}

void check_keys(const YAML::Node& map, std::initializer_list<std::string_view> allowed, std::string_view where) {
    for (const auto& kv : map) {
        const auto key = kv.first.as<std::string>();
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError(fmt::format("unknown key '{}' in {}", key, where));
        }
    }
}

ExperimentConfig config_from_yaml(const YAML::Node& root) {
    ExperimentConfig c;
    if (root.IsNull()) {
        return c;
    }
    if (!root.IsMap()) {
        throw ConfigError("config must be a mapping");
    }
    check_keys(root,
               {"input", "format", "synthetic", "master_seed", "families", "schemas", "approaches", "windows",
                "quotas", "workers", "out", "save_models", "folds", "repeats"},
               "config");
    if (const auto n = root["input"]) {
        for (const auto& p : parse_names<std::string>(n, "input", [](const std::string& s) {
                 return std::optional<std::string>(s);
             })) {
            c.inputs.emplace_back(p);
        }
    }
    if (const auto n = root["format"]) {
        if (scalar<std::string>(n, "format") != "canonical") {
            throw ConfigError("format must be 'canonical'");
        }
    }
    if (const auto n = root["synthetic"]) {
        if (!n.IsMap()) {
            throw ConfigError("synthetic must be a mapping");
        }
        check_keys(n, {"users", "train_per_direction", "test_per_direction", "seed", "separability"}, "synthetic");
        SyntheticSpec s;
        if (n["users"]) {
            s.n_users = scalar<std::size_t>(n["users"], "synthetic.users");
        }
        if (n["train_per_direction"]) {
            s.train_per_direction = scalar<std::size_t>(n["train_per_direction"], "synthetic.train_per_direction");
        }
        if (n["test_per_direction"]) {
            s.test_per_direction = scalar<std::size_t>(n["test_per_direction"], "synthetic.test_per_direction");
        }
        if (n["seed"]) {
            s.seed = scalar<std::uint64_t>(n["seed"], "synthetic.seed");
        }
        if (n["separability"]) {
            s.separability = scalar<double>(n["separability"], "synthetic.separability");
        }
        c.synthetic = s;
    }
    if (const auto n = root["master_seed"]) {
        c.master_seed = scalar<std::uint64_t>(n, "master_seed");
    }
    if (const auto n = root["families"]) {
        c.families = parse_names<Family>(n, "family", parse_family);
    }
    if (const auto n = root["schemas"]) {
        c.schemas = parse_names<FeatureSet>(n, "schema", parse_feature_set);
    }
    if (const auto n = root["approaches"]) {
        c.approaches = parse_names<Approach>(n, "approach", parse_approach);
    }
    if (const auto n = root["windows"]) {
        if (n.IsSequence()) {
            c.windows.clear();
            for (const auto& item : n) {
                c.windows.push_back(scalar<int>(item, "windows"));
            }
        } else {
            c.windows = parse_windows(scalar<std::string>(n, "windows"));
        }
    }
    if (const auto n = root["quotas"]) {
        if (!n.IsMap()) {
            throw ConfigError("quotas must be a mapping");
        }
        check_keys(n, {"train_per_direction", "test_per_direction"}, "quotas");
        if (n["train_per_direction"]) {
            c.quotas.train_per_direction = scalar<std::size_t>(n["train_per_direction"], "quotas.train_per_direction");
        }
        if (n["test_per_direction"]) {
            c.quotas.test_per_direction = scalar<std::size_t>(n["test_per_direction"], "quotas.test_per_direction");
        }
    }
    if (const auto n = root["workers"]) {
        c.workers = scalar<unsigned>(n, "workers");
    }
    if (const auto n = root["out"]) {
        c.out_dir = scalar<std::string>(n, "out");
    }
    if (const auto n = root["save_models"]) {
        c.save_models = scalar<bool>(n, "save_models");
    }
    if (const auto n = root["folds"]) {
        c.plan.folds = scalar<int>(n, "folds");
    }
    if (const auto n = root["repeats"]) {
        c.plan.repeats = scalar<int>(n, "repeats");
    }
    return c;
}

template <typename T>
void require_unique_nonempty(const std::vector<T>& v, std::string_view what) {
    if (v.empty()) {
        throw ConfigError(fmt::format("no {} selected", what));
    }
    std::vector<T> sorted(v);
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ConfigError(fmt::format("duplicate {}", what));
    }
}

} // namespace

std::vector<int> parse_windows(std::string_view text) {
    std::vector<int> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t comma = std::min(text.find(',', start), text.size());
        std::string_view part = text.substr(start, comma - start);
        while (!part.empty() && part.front() == ' ') {
            part.remove_prefix(1);
        }
        while (!part.empty() && part.back() == ' ') {
            part.remove_suffix(1);
        }
        if (part.empty()) {
            throw ConfigError(fmt::format("empty window in '{}'", text));
        }
        const std::size_t dash = part.find('-');
        if (dash == std::string_view::npos) {
            out.push_back(parse_int(part, "window"));
        } else {
            const int lo = parse_int(part.substr(0, dash), "window");
            const int hi = parse_int(part.substr(dash + 1), "window");
            if (hi < lo) {
                throw ConfigError(fmt::format("window range '{}' is reversed", part));
            }
            for (int w = lo; w <= hi; ++w) {
                out.push_back(w);
            }
        }
        start = comma + 1;
    }
    return out;
}

ExperimentConfig parse_config(std::string_view yaml_text) {
    try {
        return config_from_yaml(YAML::Load(std::string(yaml_text)));
    } catch (const YAML::Exception& e) {
        throw ConfigError(fmt::format("config is not valid YAML: {}", e.what()));
    }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(fmt::format("cannot read config {}", path.string()));
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ExperimentConfig c = parse_config(text);
    // Relative input paths are relative to the config file.
    for (auto& p : c.inputs) {
        if (p.is_relative()) {
            p = path.parent_path() / p;
        }
    }
    return c;
}

void validate_config(const ExperimentConfig& c) {
    if (c.inputs.empty() && !c.synthetic) {
        throw ConfigError("no input: give 'input' paths or a 'synthetic' block");
    }
    require_unique_nonempty(c.families, "families");
    require_unique_nonempty(c.schemas, "schemas");
    require_unique_nonempty(c.approaches, "approaches");
    require_unique_nonempty(c.windows, "windows");
    for (int w : c.windows) {
        if (w < 1 || w > 20) {
            throw ConfigError(fmt::format("window {} outside 1..20", w));
        }
    }
    if (c.quotas.train_per_direction == 0 || c.quotas.test_per_direction == 0) {
        throw ConfigError("quotas must be positive");
    }
    if (c.plan.folds < 2 || c.plan.repeats < 1) {
        throw ConfigError("need at least 2 folds and 1 repeat");
    }
    if (c.workers == 0) {
        throw ConfigError("workers must be at least 1");
    }
    if (c.synthetic && (c.synthetic->n_users < 2 || c.synthetic->separability < 0.0)) {
        throw ConfigError("synthetic corpus needs at least 2 users and separability >= 0");
    }
}

// ---------------------------------------------------------------------------
// Data preparation

PreparedData prepare_data(const ExperimentConfig& config) {
    PreparedData data;
    Corpus corpus;
    if (config.synthetic) {
        corpus = generate_synthetic_corpus(*config.synthetic);
    } else {
        std::vector<Stroke> strokes;
        for (const auto& path : config.inputs) {
            ParseReport report;
            Corpus part = parse_raw_events(path, config.format, &report);
            data.stats.rows_read += report.rows_read;
            data.stats.rows_skipped += report.rows_skipped;
            std::move(part.strokes.begin(), part.strokes.end(), std::back_inserter(strokes));
        }
        corpus = make_corpus(std::move(strokes));
    }
    data.stats.strokes_parsed = corpus.strokes.size();
    data.stats.users_seen = corpus.users.size();

    ClickFilterReport clicks;
    Corpus filtered = label_directions(filter_clicks(corpus, &clicks));
    data.stats.removed_few_points = clicks.removed_few_points;
    data.stats.removed_short_path = clicks.removed_short_path;

    const auto all_vectors = extract_corpus(filtered, config.workers);
    data.vectors = clean_nonfinite(all_vectors);
    data.stats.nonfinite_dropped = all_vectors.size() - data.vectors.size();
    data.stats.qualifying_strokes = data.vectors.size();

    std::unordered_set<std::string> kept;
    for (const auto& fv : data.vectors) {
        kept.insert(fv.stroke.user_id + '\x1f' + fv.stroke.swipe_id);
    }
    std::erase_if(filtered.strokes,
                  [&](const Stroke& s) { return !kept.contains(s.user_id + '\x1f' + s.swipe_id); });

    const auto subsets = select_eligible_users(filtered, config.quotas, &data.stats.excluded);
    data.users = attach_features(subsets, data.vectors);
    data.stats.eligible_users = data.users.size();
    return data;
}

// ---------------------------------------------------------------------------
// Running

namespace {

struct JobOutput {
    std::vector<FitRecord> ledger;
    std::vector<SelectionRecord> selections;
    std::vector<std::pair<SelectionRecord, GridResult>> grids;
    std::vector<ConfigScores> scores;
};

struct Job {
    Family family;
    FeatureSet schema;
    std::size_t user;
};

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw InputError(fmt::format("cannot write {}", path.string()));
    }
    return out;
}

void write_manifest(std::ostream& out, const ExperimentConfig& config, const ExperimentResult& result) {
    nlohmann::ordered_json j;
    j["master_seed"] = config.master_seed;
    j["plan"] = {{"folds", config.plan.folds}, {"repeats", config.plan.repeats}};
    auto& families = j["families"] = nlohmann::ordered_json::array();
    auto& grids = j["grids"] = nlohmann::ordered_json::object();
    for (Family f : config.families) {
        families.push_back(to_string(f));
        auto& labels = grids[to_string(f)] = nlohmann::ordered_json::array();
        for (const auto& p : parameter_grid(f)) {
            labels.push_back(param_label(p));
        }
    }
    auto& schemas = j["schemas"] = nlohmann::ordered_json::array();
    for (FeatureSet s : config.schemas) {
        schemas.push_back(to_string(s));
    }
    auto& approaches = j["approaches"] = nlohmann::ordered_json::array();
    for (Approach a : config.approaches) {
        approaches.push_back(to_string(a));
    }
    auto& slots = j["slots"] = nlohmann::ordered_json::array();
    for (Slot s : slots_for(config.approaches)) {
        slots.push_back(to_string(s));
    }
    j["windows"] = config.windows;
    j["quotas"] = {{"train_per_direction", config.quotas.train_per_direction},
                   {"test_per_direction", config.quotas.test_per_direction}};
    if (config.synthetic) {
        j["synthetic"] = {{"users", config.synthetic->n_users},
                          {"train_per_direction", config.synthetic->train_per_direction},
                          {"test_per_direction", config.synthetic->test_per_direction},
                          {"seed", config.synthetic->seed},
                          {"separability", config.synthetic->separability}};
    }
    const auto& s = result.stats;
    j["data"] = {{"rows_read", s.rows_read},
                 {"rows_skipped", s.rows_skipped},
                 {"strokes_parsed", s.strokes_parsed},
                 {"removed_few_points", s.removed_few_points},
                 {"removed_short_path", s.removed_short_path},
                 {"nonfinite_dropped", s.nonfinite_dropped},
                 {"qualifying_strokes", s.qualifying_strokes},
                 {"users_seen", s.users_seen},
                 {"eligible_users", s.eligible_users}};
    j["users"] = result.users;
    j["fits"] = {{"expected", result.expected_fits}, {"logged", result.ledger.size()}};
    out << j.dump(2) << '\n';
}

void write_selection_csv(std::ostream& out, std::span<const SelectionRecord> selections) {
    out << "user_id,schema,family,slot,params,mean_auc,threshold,mask_size,best_mean_auc\n";
    for (const auto& s : selections) {
        fmt::print(out, "{},{},{},{},{},{},{},{},{}\n", s.user_id, to_string(s.schema), to_string(s.family),
                   to_string(s.slot), param_label(s.selected.spec), s.selected.mean_auc, s.selected.threshold,
                   s.selected.mask_size, s.best_mean_auc);
    }
}

void write_grid_csv(std::ostream& out, std::span<const std::pair<SelectionRecord, GridResult>> grids) {
    out << "user_id,schema,family,slot,params,mean_auc,std_auc,fit_seconds,predict_seconds\n";
    for (const auto& [key, grid] : grids) {
        for (const auto& p : grid.points) {
            fmt::print(out, "{},{},{},{},{},{},{},{:.6f},{:.6f}\n", key.user_id, to_string(key.schema),
                       to_string(key.family), to_string(key.slot), param_label(p.spec), p.mean_auc, p.std_auc,
                       p.fit_seconds, p.predict_seconds);
        }
    }
}

} // namespace

void write_reports(const std::filesystem::path& dir, const MetricsReport& report) {
    std::filesystem::create_directories(dir);
    {
        auto out = open_output(dir / kMetricsFile);
        write_metrics_csv(out, report);
    }
    {
        auto out = open_output(dir / kPlotFile);
        write_plot_csv(out, report);
    }
    {
        auto out = open_output(dir / kSummaryFile);
        write_summary_json(out, report);
    }
}

ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream* log) {
    validate_config(config);
    PreparedData data = prepare_data(config);
    if (data.users.size() < 2) {
        throw InsufficientDataError(fmt::format(
            "{} eligible users; one-vs-rest training needs at least 2 (quotas {}/{} per direction)",
            data.users.size(), config.quotas.train_per_direction, config.quotas.test_per_direction));
    }

    ExperimentResult result;
    result.stats = data.stats;
    for (const auto& u : data.users) {
        result.users.push_back(u.user_id);
    }
    const auto slots = slots_for(config.approaches);
    result.expected_fits =
        expected_fit_count(config.families, data.users.size(), config.schemas.size(), slots.size(), config.plan);

    std::vector<Job> jobs;
    for (Family f : config.families) {
        for (FeatureSet s : config.schemas) {
            for (std::size_t u = 0; u < data.users.size(); ++u) {
                jobs.push_back({f, s, u});
            }
        }
    }
    std::vector<std::vector<const FeatureVector*>> test_streams;
    for (const auto& u : data.users) {
        test_streams.push_back(u.test_stream());
    }

    if (log) {
        fmt::print(*log, "{} eligible users, {} qualifying strokes, {} jobs, {} fits expected\n",
                   data.users.size(), data.stats.qualifying_strokes, jobs.size(), result.expected_fits);
    }
    std::mutex log_mutex;
    std::size_t done = 0;
    std::vector<JobOutput> outputs(jobs.size());
    if (config.save_models) {
        std::filesystem::create_directories(config.out_dir / "models");
    }

    parallel_for(jobs.size(), config.workers, [&](std::size_t j) {
        const Job& job = jobs[j];
        const auto& user = data.users[job.user];
        const FeatureSetSchema& schema = touchauth::schema(job.schema);
        JobOutput& out = outputs[j];

        std::map<Slot, SelectedParams> selected;
        for (Slot slot : slots) {
            const auto set = build_ovr_training_set(user.user_id, slot, data.users, schema,
                                                    undersample_seed(config.master_seed, user.user_id, slot));
            const TaskKey key{config.master_seed, user.user_id, job.schema, job.family, slot};
            GridResult grid = run_grid_search(set.x, set.y, key, config.plan, {}, &out.ledger);
            const SelectedParams sel = select_params_one_std(grid);
            double best = 0.0;
            for (const auto& p : grid.points) {
                best = std::max(best, p.mean_auc);
            }
            SelectionRecord record{user.user_id, job.schema, job.family, slot, sel, best};
            out.selections.push_back(record);
            out.grids.emplace_back(record, std::move(grid));
            selected.emplace(slot, sel);
        }

        for (Approach approach : config.approaches) {
            const SlotModels models = train_final_models(user.user_id, approach, data.users, schema, job.family,
                                                         selected, config.master_seed);
            if (config.save_models) {
                for (const auto& [slot, model] : models) {
                    auto file = open_output(config.out_dir / "models" /
                                            fmt::format("{}_{}_{}_{}_{}.bin", to_string(job.family),
                                                        to_string(job.schema), to_string(approach), user.user_id,
                                                        to_string(slot)));
                    save_model(file, model);
                }
            }
            ConfigScores cs{{job.family, job.schema, approach}, user.user_id, {}};
            for (std::size_t other = 0; other < data.users.size(); ++other) {
                cs.streams.push_back(score_test_strokes(models, approach, schema, user.user_id,
                                                        data.users[other].user_id, test_streams[other]));
            }
            out.scores.push_back(std::move(cs));
        }

        if (log) {
            std::lock_guard lock(log_mutex);
            ++done;
            fmt::print(*log, "[{}/{}] {} {} {}\n", done, jobs.size(), to_string(job.family), to_string(job.schema),
                       user.user_id);
        }
    });

    std::vector<std::pair<SelectionRecord, GridResult>> grids;
    for (auto& out : outputs) {
        std::move(out.ledger.begin(), out.ledger.end(), std::back_inserter(result.ledger));
        std::move(out.selections.begin(), out.selections.end(), std::back_inserter(result.selections));
        std::move(out.grids.begin(), out.grids.end(), std::back_inserter(grids));
        std::move(out.scores.begin(), out.scores.end(), std::back_inserter(result.scores));
    }
    result.report = aggregate_report(result.scores, config.windows);

    std::filesystem::create_directories(config.out_dir);
    {
        auto out = open_output(config.out_dir / kLedgerFile);
        write_ledger_header(out);
        write_ledger_rows(out, result.ledger);
    }
    {
        auto out = open_output(config.out_dir / kSelectionFile);
        write_selection_csv(out, result.selections);
    }
    {
        auto out = open_output(config.out_dir / kGridFile);
        write_grid_csv(out, grids);
    }
    {
        auto out = open_output(config.out_dir / kScoresFile);
        write_scores_csv(out, result.scores);
    }
    {
        auto out = open_output(config.out_dir / kManifestFile);
        write_manifest(out, config, result);
    }
    write_reports(config.out_dir, result.report);
    return result;
}

MetricsReport render_reports(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir,
                             std::optional<std::vector<int>> windows) {
    if (!windows) {
        std::ifstream manifest(run_dir / kManifestFile);
        if (!manifest) {
            throw InputError(fmt::format("cannot read {}", (run_dir / kManifestFile).string()));
        }
        try {
            windows = nlohmann::json::parse(manifest).at("windows").get<std::vector<int>>();
        } catch (const nlohmann::json::exception& e) {
            throw InputError(fmt::format("malformed manifest: {}", e.what()));
        }
    }
    std::ifstream scores_in(run_dir / kScoresFile);
    if (!scores_in) {
        throw InputError(fmt::format("cannot read {}", (run_dir / kScoresFile).string()));
    }
    const auto scores = read_scores_csv(scores_in);
    MetricsReport report = aggregate_report(scores, *windows);
    write_reports(out_dir, report);
    return report;
}

} // namespace touchauth
