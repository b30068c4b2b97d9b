#include "touchauth/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <new>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <cereal/archives/portable_binary.hpp>
#include <cereal/types/optional.hpp>
#include <cereal/types/string.hpp>
#include <cereal/types/variant.hpp>
#include <cereal/types/vector.hpp>
#include <fmt/format.h>

#include "svm_solver.hpp"
#include "touchauth/error.hpp"
#include "touchauth/random.hpp"
#include "tree_builders.hpp"

namespace touchauth {

const char* to_string(Family f) {
    switch (f) {
    case Family::KNN:
        return "KNN";
    case Family::SVM_RBF:
        return "SVM";
    case Family::RF:
        return "RF";
    case Family::ET:
        return "ET";
    case Family::GB:
        return "GB";
    }
    return "?";
}

std::optional<Family> parse_family(std::string_view s) {
    if (s == "SVM_RBF") {
        return Family::SVM_RBF;
    }
    for (Family f : kAllFamilies) {
        if (s == to_string(f)) {
            return f;
        }
    }
    return std::nullopt;
}

bool is_tree_family(Family f) { return f == Family::RF || f == Family::ET || f == Family::GB; }

bool uses_scaler(Family f) { return f == Family::KNN || f == Family::SVM_RBF; }

std::vector<ClassifierSpec> parameter_grid(Family family) {
    std::vector<ClassifierSpec> grid;
    switch (family) {
    case Family::KNN:
        for (int k : {1, 3, 5, 7, 9}) {
            grid.push_back({.family = family, .k = k});
        }
        break;
    case Family::SVM_RBF:
        for (double c : {0.01, 0.1, 1.0, 10.0, 20.0, 100.0}) {
            grid.push_back({.family = family, .C = c});
        }
        break;
    case Family::RF:
    case Family::ET:
    case Family::GB:
        for (double fraction : {0.005, 0.01, 0.1}) {
            for (int n : {100, 200, 500, 700, 1000, 1200}) {
                grid.push_back({.family = family, .n_estimators = n, .min_samples_split_fraction = fraction});
            }
        }
        break;
    }
    return grid;
}

bool less_complex(const ClassifierSpec& a, const ClassifierSpec& b) {
    switch (a.family) {
    case Family::KNN:
        return a.k < b.k;
    case Family::SVM_RBF:
        return a.C < b.C;
    default:
        if (a.n_estimators != b.n_estimators) {
            return a.n_estimators < b.n_estimators;
        }
        // A larger minimum split stops growth earlier.
        return a.min_samples_split_fraction > b.min_samples_split_fraction;
    }
}

std::string param_label(const ClassifierSpec& spec) {
    switch (spec.family) {
    case Family::KNN:
        return fmt::format("k={}", spec.k);
    case Family::SVM_RBF:
        return fmt::format("C={}", spec.C);
    default:
        return fmt::format("n={};split={}", spec.n_estimators, spec.min_samples_split_fraction);
    }
}

std::size_t min_split_size(double fraction, std::size_t n_train) {
    const auto size = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n_train)));
    return std::max<std::size_t>(2, size);
}

// ---------------------------------------------------------------------------

ScalerParams fit_scaler(const Matrix& train) {
    if (train.rows() == 0) {
        throw TrainingError("cannot fit a scaler on an empty matrix");
    }
    const std::size_t n = train.rows();
    const std::size_t p = train.cols();
    ScalerParams s;
    s.mean.assign(p, 0.0);
    s.std.assign(p, 0.0);
    s.min.assign(p, 0.0);
    s.max.assign(p, 0.0);
    for (std::size_t c = 0; c < p; ++c) {
        double m = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            m += train(r, c);
        }
        m /= static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            ss += (train(r, c) - m) * (train(r, c) - m);
        }
        s.mean[c] = m;
        s.std[c] = std::sqrt(ss / static_cast<double>(n));
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t r = 0; r < n; ++r) {
            const double z = s.std[c] > 0.0 ? (train(r, c) - m) / s.std[c] : 0.0;
            lo = std::min(lo, z);
            hi = std::max(hi, z);
        }
        s.min[c] = lo;
        s.max[c] = hi;
    }
    return s;
}

Matrix apply_scaler(const ScalerParams& params, const Matrix& x) {
    if (x.cols() != params.mean.size()) {
        throw InputError("scaler arity mismatch");
    }
    Matrix out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < x.cols(); ++c) {
            if (!(params.std[c] > 0.0) || !(params.max[c] > params.min[c])) {
                out(r, c) = 0.0;
                continue;
            }
            const double z = (x(r, c) - params.mean[c]) / params.std[c];
            out(r, c) = (z - params.min[c]) / (params.max[c] - params.min[c]);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

std::size_t Tree::depth() const {
    std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
    std::size_t best = 0;
    while (!stack.empty()) {
        auto [i, d] = stack.back();
        stack.pop_back();
        best = std::max(best, d);
        const auto& n = nodes[static_cast<std::size_t>(i)];
        if (n.feature >= 0) {
            stack.emplace_back(n.left, d + 1);
            stack.emplace_back(n.right, d + 1);
        }
    }
    return best;
}

namespace {

void check_training_input(const Matrix& x, std::span<const int> y) {
    if (x.rows() == 0) {
        throw TrainingError("empty training set");
    }
    if (y.size() != x.rows()) {
        throw InputError("label count does not match row count");
    }
    for (double v : x.data()) {
        if (!std::isfinite(v)) {
            throw InputError("training matrix contains non-finite values");
        }
    }
    bool has_pos = false;
    bool has_neg = false;
    for (int v : y) {
        if (v != 0 && v != 1) {
            throw InputError("labels must be 0 or 1");
        }
        (v == 1 ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) {
        throw TrainingError("training labels contain a single class");
    }
}

std::uint64_t tree_seed(std::uint64_t spec_seed, std::size_t index) {
    return SeedBuilder(spec_seed).add("tree").add(std::uint64_t{index}).seed();
}

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

// log(1 + exp(z)) - y z
double logistic_loss(double z, int y) {
    const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    return softplus - static_cast<double>(y) * z;
}

ForestState fit_forest(const ClassifierSpec& spec, const Matrix& x, std::span<const int> y) {
    const detail::ColumnData columns(x);
    const std::size_t min_split = min_split_size(spec.min_samples_split_fraction, x.rows());
    const std::size_t mtry = detail::features_per_split(x.cols());
    ForestState forest;
    forest.trees.reserve(static_cast<std::size_t>(spec.n_estimators));
    for (int t = 0; t < spec.n_estimators; ++t) {
        Rng rng(tree_seed(spec.seed, static_cast<std::size_t>(t)));
        forest.trees.push_back(spec.family == Family::ET ? detail::build_extra_tree(columns, y, min_split, mtry, rng)
                                                         : detail::build_random_tree(columns, y, min_split, mtry, rng));
    }
    return forest;
}

BoostState fit_boosting(const ClassifierSpec& spec, const Matrix& x, std::span<const int> y) {
    const std::size_t n = x.rows();
    const detail::ColumnData columns(x);
    const auto sorted = detail::presort_columns(columns);
    const std::size_t min_split = min_split_size(spec.min_samples_split_fraction, n);

    const double pos = static_cast<double>(std::count(y.begin(), y.end(), 1));
    BoostState boost;
    boost.init_score = std::log(pos / (static_cast<double>(n) - pos));

    std::vector<double> score(n, boost.init_score);
    std::vector<double> residual(n);
    std::vector<double> hessian(n);
    std::vector<std::uint8_t> in_bag(n, 1);
    const std::size_t n_in_bag =
        std::max<std::size_t>(1, static_cast<std::size_t>(spec.subsample * static_cast<double>(n)));

    for (int stage = 0; stage < spec.n_estimators; ++stage) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = sigmoid(score[i]);
            residual[i] = static_cast<double>(y[i]) - p;
            hessian[i] = p * (1.0 - p);
        }
        if (n_in_bag < n) {
            Rng rng(tree_seed(spec.seed, static_cast<std::size_t>(stage)));
            std::fill(in_bag.begin(), in_bag.end(), 0);
            for (std::size_t i : rng.sample_indices(n, n_in_bag)) {
                in_bag[i] = 1;
            }
        }
        Tree tree = detail::build_boost_tree(columns, sorted, residual, hessian, in_bag, min_split, kGbMaxDepth,
                                             kGbLearningRate);
        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            score[i] += tree.predict(x.row(i));
            loss += logistic_loss(score[i], y[i]);
        }
        boost.train_loss.push_back(loss / static_cast<double>(n));
        boost.trees.push_back(std::move(tree));
    }
    return boost;
}

void check_predict_input(const TrainedModel& model, const Matrix& x) {
    if (x.rows() > 0 && x.cols() != model.n_features) {
        throw InputError(fmt::format("expected {} features, got {}", model.n_features, x.cols()));
    }
}

} // namespace

TrainedModel fit(const ClassifierSpec& spec, const Matrix& x, std::span<const int> y,
                 const ScalerParams* preset_scaler) {
    check_training_input(x, y);
    TrainedModel model;
    model.spec = spec;
    model.n_features = x.cols();
    if (uses_scaler(spec.family)) {
        if (preset_scaler && preset_scaler->mean.size() != x.cols()) {
            throw InputError("preset scaler arity mismatch");
        }
        model.scaler = preset_scaler ? *preset_scaler : fit_scaler(x);
    }

    switch (spec.family) {
    case Family::KNN: {
        if (spec.k < 1 || static_cast<std::size_t>(spec.k) > x.rows()) {
            throw TrainingError("k must lie in [1, n_train]");
        }
        model.state = KnnState{apply_scaler(*model.scaler, x), std::vector<int>(y.begin(), y.end())};
        break;
    }
    case Family::SVM_RBF: {
        if (!(spec.C > 0.0)) {
            throw TrainingError("C must be positive");
        }
        model.state = detail::train_svm(apply_scaler(*model.scaler, x), y, spec.C, kSvmTolerance);
        break;
    }
    case Family::RF:
    case Family::ET:
        if (spec.n_estimators < 1) {
            throw TrainingError("n_estimators must be positive");
        }
        model.state = fit_forest(spec, x, y);
        break;
    case Family::GB:
        if (spec.n_estimators < 1 || !(spec.subsample > 0.0 && spec.subsample <= 1.0)) {
            throw TrainingError("invalid boosting parameters");
        }
        model.state = fit_boosting(spec, x, y);
        break;
    }
    return model;
}

std::vector<Neighbor> knn_neighbors(const KnnState& state, std::span<const double> query, int k) {
    std::vector<Neighbor> all(state.train.rows());
    for (std::size_t i = 0; i < state.train.rows(); ++i) {
        const auto row = state.train.row(i);
        double d2 = 0.0;
        for (std::size_t c = 0; c < row.size(); ++c) {
            const double d = row[c] - query[c];
            d2 += d * d;
        }
        all[i] = {i, std::sqrt(d2)};
    }
    const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k), all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(kk), all.end(),
                      [](const Neighbor& a, const Neighbor& b) {
                          return a.distance != b.distance ? a.distance < b.distance : a.index < b.index;
                      });
    all.resize(kk);
    return all;
}

std::vector<double> svm_decision(const TrainedModel& model, const Matrix& x) {
    const auto* svm = std::get_if<SvmState>(&model.state);
    if (!svm) {
        throw InputError("model is not an SVM");
    }
    check_predict_input(model, x);
    const Matrix xs = apply_scaler(*model.scaler, x);
    std::vector<double> out(x.rows());
    for (std::size_t r = 0; r < xs.rows(); ++r) {
        double f = -svm->rho;
        for (std::size_t s = 0; s < svm->coef.size(); ++s) {
            f += svm->coef[s] * detail::rbf_kernel(svm->support_vectors.row(s), xs.row(r), svm->gamma);
        }
        out[r] = f;
    }
    return out;
}

std::vector<std::vector<double>> predict_proba_staged(const TrainedModel& model, const Matrix& x,
                                                      std::span<const int> stages) {
    check_predict_input(model, x);
    const std::vector<Tree>* trees = nullptr;
    double init = 0.0;
    bool boosted = false;
    if (const auto* f = std::get_if<ForestState>(&model.state)) {
        trees = &f->trees;
    } else if (const auto* b = std::get_if<BoostState>(&model.state)) {
        trees = &b->trees;
        init = b->init_score;
        boosted = true;
    } else {
        throw InputError("staged prediction needs a tree ensemble");
    }
    for (std::size_t s = 0; s < stages.size(); ++s) {
        if (stages[s] < 1 || static_cast<std::size_t>(stages[s]) > trees->size() || (s > 0 && stages[s] <= stages[s - 1])) {
            throw InputError("stages must be increasing and within the ensemble size");
        }
    }

    std::vector<std::vector<double>> out(stages.size(), std::vector<double>(x.rows()));
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto row = x.row(r);
        double acc = boosted ? init : 0.0;
        std::size_t next = 0;
        for (std::size_t t = 0; t < trees->size() && next < stages.size(); ++t) {
            acc += (*trees)[t].predict(row);
            if (t + 1 == static_cast<std::size_t>(stages[next])) {
                out[next][r] = boosted ? sigmoid(acc) : acc / static_cast<double>(t + 1);
                ++next;
            }
        }
    }
    return out;
}

std::vector<double> predict_proba(const TrainedModel& model, const Matrix& x) {
    check_predict_input(model, x);
    if (const auto* knn = std::get_if<KnnState>(&model.state)) {
        const Matrix xs = apply_scaler(*model.scaler, x);
        std::vector<double> out(x.rows());
        for (std::size_t r = 0; r < xs.rows(); ++r) {
            int genuine = 0;
            for (const auto& nb : knn_neighbors(*knn, xs.row(r), model.spec.k)) {
                genuine += knn->labels[nb.index];
            }
            out[r] = static_cast<double>(genuine) / static_cast<double>(model.spec.k);
        }
        return out;
    }
    if (const auto* svm = std::get_if<SvmState>(&model.state)) {
        auto out = svm_decision(model, x);
        for (double& v : out) {
            v = detail::platt_probability(v, svm->platt_a, svm->platt_b);
        }
        return out;
    }
    const std::size_t n_trees = std::holds_alternative<ForestState>(model.state)
                                    ? std::get<ForestState>(model.state).trees.size()
                                    : std::get<BoostState>(model.state).trees.size();
    const std::array<int, 1> all{static_cast<int>(n_trees)};
    return std::move(predict_proba_staged(model, x, all).front());
}

// ---------------------------------------------------------------------------
// Serialization

template <class Archive>
void save(Archive& ar, const Matrix& m) {
    ar(static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols()), m.data());
}

template <class Archive>
void load(Archive& ar, Matrix& m) {
    std::uint64_t rows = 0;
    std::uint64_t cols = 0;
    std::vector<double> data;
    ar(rows, cols, data);
    if (data.size() != rows * cols) {
        throw InputError("corrupt matrix in model blob");
    }
    m = Matrix(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(r * cols), cols, m.row(r).begin());
    }
}

template <class Archive>
void serialize(Archive& ar, ClassifierSpec& s) {
    ar(s.family, s.k, s.C, s.n_estimators, s.min_samples_split_fraction, s.subsample, s.seed);
}

template <class Archive>
void serialize(Archive& ar, ScalerParams& s) {
    ar(s.mean, s.std, s.min, s.max);
}

template <class Archive>
void serialize(Archive& ar, TreeNode& n) {
    ar(n.feature, n.threshold, n.left, n.right, n.value);
}

template <class Archive>
void serialize(Archive& ar, Tree& t) {
    ar(t.nodes);
}

template <class Archive>
void serialize(Archive& ar, KnnState& s) {
    ar(s.train, s.labels);
}

template <class Archive>
void serialize(Archive& ar, SvmState& s) {
    std::uint64_t iterations = s.iterations;
    ar(s.support_vectors, s.coef, s.rho, s.gamma, s.platt_a, s.platt_b, s.alpha, s.y_signed, iterations);
    s.iterations = iterations;
}

template <class Archive>
void serialize(Archive& ar, ForestState& s) {
    ar(s.trees);
}

template <class Archive>
void serialize(Archive& ar, BoostState& s) {
    ar(s.init_score, s.trees, s.train_loss);
}

namespace {
constexpr std::string_view kModelMagic = "TOUCHAUTH-MODEL";
constexpr std::uint32_t kModelVersion = 1;
} // namespace

void save_model(std::ostream& out, const TrainedModel& model) {
    // Raw magic first, so foreign input is rejected before the archive
    // reads any length prefix.
    out.write(kModelMagic.data(), static_cast<std::streamsize>(kModelMagic.size()));
    cereal::PortableBinaryOutputArchive ar(out);
    std::uint64_t n_features = model.n_features;
    ar(kModelVersion, model.spec, model.scaler, n_features, model.state);
}

TrainedModel load_model(std::istream& in) {
    std::string magic(kModelMagic.size(), '\0');
    if (!in.read(magic.data(), static_cast<std::streamsize>(magic.size())) || magic != kModelMagic) {
        throw InputError("not a model blob");
    }
    try {
        cereal::PortableBinaryInputArchive ar(in);
        std::uint32_t version = 0;
        ar(version);
        if (version != kModelVersion) {
            throw InputError("not a model blob of a supported version");
        }
        TrainedModel model;
        std::uint64_t n_features = 0;
        ar(model.spec, model.scaler, n_features, model.state);
        model.n_features = n_features;
        return model;
    } catch (const cereal::Exception& e) {
        throw InputError(std::string("corrupt model blob: ") + e.what());
    } catch (const std::bad_alloc&) {
        throw InputError("corrupt model blob: implausible length");
    } catch (const std::length_error&) {
        throw InputError("corrupt model blob: implausible length");
    }
}

} // namespace touchauth
