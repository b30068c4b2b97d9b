#include "touchauth/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <ostream>
#include <unordered_map>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "touchauth/error.hpp"
#include "touchauth/evaluation.hpp"
#include "touchauth/parallel.hpp"
#include "touchauth/random.hpp"
#include "touchauth/stats.hpp"

namespace touchauth {

const char* to_string(Approach a) { return a == Approach::Bidirectional ? "Bi" : "Omni"; }

std::optional<Approach> parse_approach(std::string_view s) {
    if (s == "Bi" || s == "Bidirectional") {
        return Approach::Bidirectional;
    }
    if (s == "Omni" || s == "Omnidirectional") {
        return Approach::Omnidirectional;
    }
    return std::nullopt;
}

const char* to_string(Slot s) {
    switch (s) {
    case Slot::Hs:
        return "Hs";
    case Slot::Vs:
        return "Vs";
    case Slot::Omni:
        return "Omni";
    }
    return "?";
}

std::optional<Slot> parse_slot(std::string_view s) {
    for (Slot slot : {Slot::Hs, Slot::Vs, Slot::Omni}) {
        if (s == to_string(slot)) {
            return slot;
        }
    }
    return std::nullopt;
}

std::vector<Slot> slots_for(Approach approach) {
    if (approach == Approach::Bidirectional) {
        return {Slot::Hs, Slot::Vs};
    }
    return {Slot::Omni};
}

std::vector<Slot> slots_for(std::span<const Approach> approaches) {
    std::vector<Slot> out;
    for (Slot s : {Slot::Hs, Slot::Vs, Slot::Omni}) {
        for (Approach a : approaches) {
            const auto own = slots_for(a);
            if (std::find(own.begin(), own.end(), s) != own.end()) {
                out.push_back(s);
                break;
            }
        }
    }
    return out;
}

std::vector<Direction> slot_directions(Slot slot) {
    switch (slot) {
    case Slot::Hs:
        return {Direction::Left, Direction::Right};
    case Slot::Vs:
        return {Direction::Up, Direction::Down};
    case Slot::Omni:
        break;
    }
    return {kAllDirections.begin(), kAllDirections.end()};
}

Slot slot_for(Approach approach, Direction direction) {
    if (approach == Approach::Omnidirectional) {
        return Slot::Omni;
    }
    return direction == Direction::Left || direction == Direction::Right ? Slot::Hs : Slot::Vs;
}

std::vector<const FeatureVector*> UserFeatures::slot_train(Slot slot) const {
    std::vector<const FeatureVector*> out;
    for (Direction d : slot_directions(slot)) {
        for (const auto& fv : train[static_cast<int>(d)]) {
            out.push_back(&fv);
        }
    }
    return out;
}

std::vector<const FeatureVector*> UserFeatures::test_stream() const {
    std::vector<const FeatureVector*> out;
    for (const auto& bucket : test) {
        for (const auto& fv : bucket) {
            out.push_back(&fv);
        }
    }
    std::sort(out.begin(), out.end(), [](const FeatureVector* a, const FeatureVector* b) {
        if (a->stroke.start_ms != b->stroke.start_ms) {
            return a->stroke.start_ms < b->stroke.start_ms;
        }
        return a->stroke.swipe_id < b->stroke.swipe_id;
    });
    return out;
}

std::vector<UserFeatures> attach_features(std::span<const UserSubset> subsets,
                                          std::span<const FeatureVector> vectors) {
    std::unordered_map<std::string, const FeatureVector*> by_key;
    by_key.reserve(vectors.size());
    auto key = [](const std::string& user, const std::string& swipe) { return user + '\x1f' + swipe; };
    for (const auto& fv : vectors) {
        by_key.emplace(key(fv.stroke.user_id, fv.stroke.swipe_id), &fv);
    }
    auto lookup = [&](const Stroke& s) -> const FeatureVector& {
        const auto it = by_key.find(key(s.user_id, s.swipe_id));
        if (it == by_key.end()) {
            throw InputError(fmt::format("no feature vector for stroke {}/{}", s.user_id, s.swipe_id));
        }
        return *it->second;
    };

    std::vector<UserFeatures> out;
    out.reserve(subsets.size());
    for (const auto& subset : subsets) {
        UserFeatures uf;
        uf.user_id = subset.user_id;
        for (std::size_t d = 0; d < 4; ++d) {
            for (const auto& s : subset.train[d]) {
                uf.train[d].push_back(lookup(s));
            }
            for (const auto& s : subset.test[d]) {
                uf.test[d].push_back(lookup(s));
            }
        }
        out.push_back(std::move(uf));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Seeds

std::uint64_t undersample_seed(std::uint64_t master_seed, const std::string& user_id, Slot slot) {
    return SeedBuilder(master_seed).add("undersample").add(user_id).add(to_string(slot)).seed();
}

std::uint64_t fold_seed(std::uint64_t master_seed, const std::string& user_id, Slot slot, int repeat) {
    return SeedBuilder(master_seed)
        .add("folds")
        .add(user_id)
        .add(to_string(slot))
        .add(static_cast<std::uint64_t>(repeat))
        .seed();
}

namespace {

SeedBuilder task_seed(const TaskKey& key) {
    SeedBuilder b(key.master_seed);
    b.add(key.user_id).add(to_string(key.schema)).add(to_string(key.family)).add(to_string(key.slot));
    return b;
}

} // namespace

std::uint64_t fit_seed(const TaskKey& key, const ClassifierSpec& point, int repeat, int fold) {
    SeedBuilder b = task_seed(key);
    switch (point.family) {
    case Family::KNN:
        b.add(static_cast<std::uint64_t>(point.k));
        break;
    case Family::SVM_RBF:
        b.add(point.C);
        break;
    default:
        b.add(point.min_samples_split_fraction);
        break;
    }
    return b.add(static_cast<std::uint64_t>(repeat)).add(static_cast<std::uint64_t>(fold)).seed();
}

std::uint64_t final_fit_seed(const TaskKey& key) { return task_seed(key).add("final").seed(); }

// ---------------------------------------------------------------------------

OvrTrainingSet build_ovr_training_set(const std::string& target_user, Slot slot, std::span<const UserFeatures> users,
                                      const FeatureSetSchema& schema, std::uint64_t seed) {
    const auto target = std::find_if(users.begin(), users.end(),
                                     [&](const UserFeatures& u) { return u.user_id == target_user; });
    if (target == users.end()) {
        throw InputError(fmt::format("unknown target user {}", target_user));
    }
    const auto genuine = target->slot_train(slot);
    std::vector<std::pair<const FeatureVector*, const std::string*>> pool;
    for (const auto& u : users) {
        if (u.user_id == target_user) {
            continue;
        }
        for (const auto* fv : u.slot_train(slot)) {
            pool.emplace_back(fv, &u.user_id);
        }
    }
    if (genuine.empty()) {
        throw SamplingError(fmt::format("user {} has no {} training strokes", target_user, to_string(slot)));
    }
    if (pool.size() < genuine.size()) {
        throw SamplingError(fmt::format("{} impostor strokes cannot balance {} genuine strokes", pool.size(),
                                        genuine.size()));
    }

    OvrTrainingSet set;
    set.x = Matrix(0, schema.members.size());
    for (const auto* fv : genuine) {
        set.x.append_row(project(*fv, schema));
        set.y.push_back(1);
        set.row_owner.push_back(target_user);
    }
    Rng rng(seed);
    for (std::size_t i : rng.sample_indices(pool.size(), genuine.size())) {
        set.x.append_row(project(*pool[i].first, schema));
        set.y.push_back(0);
        set.row_owner.push_back(*pool[i].second);
    }
    return set;
}

std::vector<FoldSplit> stratified_folds(std::span<const int> y, int folds, std::uint64_t seed) {
    if (folds < 2) {
        throw InputError("at least two folds are required");
    }
    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t i = 0; i < y.size(); ++i) {
        by_class[y[i] == 1 ? 1 : 0].push_back(i);
    }
    for (const auto& members : by_class) {
        if (members.size() < static_cast<std::size_t>(folds)) {
            throw InputError("each class needs at least one member per fold");
        }
    }
    std::vector<int> assignment(y.size());
    Rng rng(seed);
    for (auto& members : by_class) {
        rng.shuffle(members);
        for (std::size_t j = 0; j < members.size(); ++j) {
            assignment[members[j]] = static_cast<int>(j % static_cast<std::size_t>(folds));
        }
    }
    std::vector<FoldSplit> out(static_cast<std::size_t>(folds));
    for (std::size_t i = 0; i < y.size(); ++i) {
        for (int f = 0; f < folds; ++f) {
            auto& part = f == assignment[i] ? out[static_cast<std::size_t>(f)].validation
                                            : out[static_cast<std::size_t>(f)].train;
            part.push_back(i);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Grid search

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::vector<int> pick(std::span<const int> y, std::span<const std::size_t> rows) {
    std::vector<int> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) {
        out.push_back(y[r]);
    }
    return out;
}

double fold_auc(std::span<const double> proba, std::span<const int> labels) {
    std::vector<double> genuine;
    std::vector<double> impostor;
    for (std::size_t i = 0; i < proba.size(); ++i) {
        (labels[i] == 1 ? genuine : impostor).push_back(proba[i]);
    }
    if (genuine.empty() || impostor.empty()) {
        throw MetricError("validation fold holds a single class");
    }
    return auc(genuine, impostor);
}

// Scores of one fitted chain or model for each grid point it stands for.
struct TaskOutput {
    std::vector<double> auc;
    std::vector<double> fit_seconds;
    std::vector<double> predict_seconds;
};

struct Task {
    std::vector<std::size_t> points; ///< grid indices served, ascending n_estimators for chains
    int repeat = 0;
    int fold = 0;
};

} // namespace

GridResult run_grid_search(const Matrix& x, std::span<const int> y, const TaskKey& key, const CvPlan& plan,
                           const GridSearchOptions& options, std::vector<FitRecord>* ledger) {
    if (x.rows() != y.size()) {
        throw InputError("label count does not match row count");
    }
    const auto grid = parameter_grid(key.family);
    std::vector<std::vector<FoldSplit>> splits;
    for (int r = 0; r < plan.repeats; ++r) {
        splits.push_back(stratified_folds(y, plan.folds, fold_seed(key.master_seed, key.user_id, key.slot, r)));
    }
    std::optional<ScalerParams> global_scaler;
    if (options.scaler_scope == ScalerScope::FullTrainingSet && uses_scaler(key.family)) {
        global_scaler = fit_scaler(x);
    }

    // A chain serves every point sharing its minimum split fraction.
    std::vector<std::vector<std::size_t>> groups;
    if (is_tree_family(key.family) && options.share_tree_prefixes) {
        std::map<double, std::vector<std::size_t>> by_fraction;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            by_fraction[grid[i].min_samples_split_fraction].push_back(i);
        }
        for (auto& [fraction, members] : by_fraction) {
            std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
                return grid[a].n_estimators < grid[b].n_estimators;
            });
            groups.push_back(members);
        }
    } else {
        for (std::size_t i = 0; i < grid.size(); ++i) {
            groups.push_back({i});
        }
    }

    std::vector<Task> tasks;
    for (const auto& g : groups) {
        for (int r = 0; r < plan.repeats; ++r) {
            for (int f = 0; f < plan.folds; ++f) {
                tasks.push_back({g, r, f});
            }
        }
    }

    std::vector<TaskOutput> outputs(tasks.size());
    parallel_for(tasks.size(), options.workers, [&](std::size_t t) {
        const Task& task = tasks[t];
        const FoldSplit& split = splits[static_cast<std::size_t>(task.repeat)][static_cast<std::size_t>(task.fold)];
        const Matrix x_train = x.select_rows(split.train);
        const Matrix x_val = x.select_rows(split.validation);
        const auto y_train = pick(y, split.train);
        const auto y_val = pick(y, split.validation);

        ClassifierSpec spec = grid[task.points.back()];
        spec.seed = fit_seed(key, spec, task.repeat, task.fold);

        const auto t0 = Clock::now();
        const TrainedModel model = fit(spec, x_train, y_train, global_scaler ? &*global_scaler : nullptr);
        const double fit_time = seconds_since(t0);

        TaskOutput& out = outputs[t];
        const auto t1 = Clock::now();
        if (task.points.size() == 1) {
            out.auc.push_back(fold_auc(predict_proba(model, x_val), y_val));
        } else {
            std::vector<int> stages;
            for (std::size_t p : task.points) {
                stages.push_back(grid[p].n_estimators);
            }
            for (const auto& proba : predict_proba_staged(model, x_val, stages)) {
                out.auc.push_back(fold_auc(proba, y_val));
            }
        }
        const double predict_time = seconds_since(t1);
        // A shared chain's cost is attributed to each point pro rata to
        // its tree count.
        for (std::size_t p : task.points) {
            const double share = static_cast<double>(grid[p].n_estimators) / static_cast<double>(spec.n_estimators);
            out.fit_seconds.push_back(task.points.size() == 1 ? fit_time : fit_time * share);
            out.predict_seconds.push_back(task.points.size() == 1 ? predict_time : predict_time * share);
        }
    });

    GridResult result;
    result.family = key.family;
    result.points.resize(grid.size());
    const auto n_fold_scores = static_cast<std::size_t>(plan.fits_per_point());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        result.points[i].spec = grid[i];
        result.points[i].fold_auc.assign(n_fold_scores, 0.0);
    }
    std::vector<std::vector<double>> fit_times(grid.size(), std::vector<double>(n_fold_scores, 0.0));
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const Task& task = tasks[t];
        const auto slot = static_cast<std::size_t>(task.repeat * plan.folds + task.fold);
        for (std::size_t j = 0; j < task.points.size(); ++j) {
            auto& point = result.points[task.points[j]];
            point.fold_auc[slot] = outputs[t].auc[j];
            point.fit_seconds += outputs[t].fit_seconds[j];
            point.predict_seconds += outputs[t].predict_seconds[j];
            fit_times[task.points[j]][slot] = outputs[t].fit_seconds[j];
        }
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
        auto& point = result.points[i];
        point.mean_auc = stats::mean(point.fold_auc);
        point.std_auc = stats::stddev(point.fold_auc, 0);
        if (ledger) {
            const std::string label = param_label(point.spec);
            for (std::size_t s = 0; s < n_fold_scores; ++s) {
                ledger->push_back({key.user_id, key.schema, key.family, key.slot, label,
                                   static_cast<int>(s) / plan.folds, static_cast<int>(s) % plan.folds,
                                   point.fold_auc[s], fit_times[i][s]});
            }
        }
    }
    return result;
}

SelectedParams select_params_one_std(const GridResult& result) {
    if (result.points.empty()) {
        throw InputError("cannot select from an empty grid");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < result.points.size(); ++i) {
        if (result.points[i].mean_auc > result.points[best].mean_auc) {
            best = i;
        }
    }
    SelectedParams out;
    out.threshold = result.points[best].mean_auc - result.points[best].std_auc;
    std::optional<std::size_t> chosen;
    for (std::size_t i = 0; i < result.points.size(); ++i) {
        if (result.points[i].mean_auc < out.threshold) {
            continue;
        }
        ++out.mask_size;
        if (!chosen || less_complex(result.points[i].spec, result.points[*chosen].spec)) {
            chosen = i;
        }
    }
    // The best point always satisfies its own threshold.
    out.point_index = *chosen;
    out.spec = result.points[*chosen].spec;
    out.mean_auc = result.points[*chosen].mean_auc;
    return out;
}

SlotModels train_final_models(const std::string& user_id, Approach approach, std::span<const UserFeatures> users,
                              const FeatureSetSchema& schema, Family family,
                              const std::map<Slot, SelectedParams>& selected, std::uint64_t master_seed) {
    SlotModels models;
    for (Slot slot : slots_for(approach)) {
        const auto it = selected.find(slot);
        if (it == selected.end()) {
            throw InputError(fmt::format("no selected parameters for slot {}", to_string(slot)));
        }
        if (it->second.spec.family != family) {
            throw InputError("selected parameters belong to another family");
        }
        const auto set = build_ovr_training_set(user_id, slot, users, schema,
                                                undersample_seed(master_seed, user_id, slot));
        ClassifierSpec spec = it->second.spec;
        spec.seed = final_fit_seed({master_seed, user_id, schema.name, family, slot});
        models.emplace(slot, fit(spec, set.x, set.y));
    }
    return models;
}

std::size_t expected_fit_count(std::span<const Family> families, std::size_t n_users, std::size_t n_schemas,
                               std::size_t n_slots, const CvPlan& plan) {
    std::size_t per_task = 0;
    for (Family f : families) {
        per_task += parameter_grid(f).size() * static_cast<std::size_t>(plan.fits_per_point());
    }
    return per_task * n_users * n_schemas * n_slots;
}

void write_ledger_header(std::ostream& out) { out << "user_id,schema,family,slot,params,repeat,fold,auc,fit_seconds\n"; }

void write_ledger_rows(std::ostream& out, std::span<const FitRecord> records) {
    for (const auto& r : records) {
        fmt::print(out, "{},{},{},{},{},{},{},{},{:.6f}\n", r.user_id, to_string(r.schema), to_string(r.family),
                   to_string(r.slot), r.params, r.repeat, r.fold, r.auc, r.fit_seconds);
    }
}

} // namespace touchauth
