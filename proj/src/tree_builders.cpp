#include "tree_builders.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace touchauth::detail {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Pending {
    std::size_t begin;
    std::size_t end;
    int node;
};

// Two-class Gini impurity scaled by node weight: w * 2p(1-p).
inline double weighted_gini(double w, double w_pos) { return w > 0.0 ? 2.0 * w_pos * (w - w_pos) / w : 0.0; }

struct SplitChoice {
    double impurity = kInf;
    int feature = -1;
    double threshold = 0.0;

    // Lower impurity wins; exact ties go to the lower feature index, then
    // the lower threshold.
    bool improves_on(double imp, int f, double thr) const {
        if (imp != impurity) {
            return imp < impurity;
        }
        if (f != feature) {
            return feature < 0 || f < feature;
        }
        return thr < threshold;
    }
};

// Moves rows with value <= threshold to the front, preserving their
// relative order on both sides.
std::size_t stable_split(std::vector<std::uint32_t>& idx, std::vector<std::uint32_t>& scratch, std::size_t begin,
                         std::size_t end, const double* column, double threshold) {
    scratch.clear();
    std::size_t write = begin;
    for (std::size_t i = begin; i < end; ++i) {
        if (column[idx[i]] <= threshold) {
            idx[write++] = idx[i];
        } else {
            scratch.push_back(idx[i]);
        }
    }
    std::copy(scratch.begin(), scratch.end(), idx.begin() + static_cast<std::ptrdiff_t>(write));
    return write;
}

int add_node(Tree& tree) {
    tree.nodes.emplace_back();
    return static_cast<int>(tree.nodes.size() - 1);
}

} // namespace

ColumnData::ColumnData(const Matrix& x) : rows(x.rows()), cols(x.cols()), values(x.rows() * x.cols()) {
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            values[c * rows + r] = x(r, c);
        }
    }
}

std::size_t features_per_split(std::size_t n_features) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n_features)))));
}

Tree build_extra_tree(const ColumnData& x, std::span<const int> y, std::size_t min_split, std::size_t mtry, Rng& rng) {
    Tree tree;
    std::vector<std::uint32_t> idx(x.rows);
    std::iota(idx.begin(), idx.end(), 0u);
    std::vector<std::uint32_t> scratch;
    std::vector<int> pool(x.cols);

    std::vector<Pending> stack{{0, x.rows, add_node(tree)}};
    while (!stack.empty()) {
        const Pending job = stack.back();
        stack.pop_back();
        const std::size_t n = job.end - job.begin;
        std::size_t pos = 0;
        for (std::size_t i = job.begin; i < job.end; ++i) {
            pos += static_cast<std::size_t>(y[idx[i]]);
        }
        auto& leaf = tree.nodes[static_cast<std::size_t>(job.node)];
        leaf.value = static_cast<double>(pos) / static_cast<double>(n);
        if (n < min_split || pos == 0 || pos == n) {
            continue;
        }

        std::iota(pool.begin(), pool.end(), 0);
        std::size_t remaining = pool.size();
        std::size_t visited = 0;
        SplitChoice best;
        while (remaining > 0 && visited < mtry) {
            const std::size_t pick = rng.below(remaining);
            const int f = pool[pick];
            std::swap(pool[pick], pool[remaining - 1]);
            --remaining;

            const double* col = x.column(static_cast<std::size_t>(f));
            double lo = kInf;
            double hi = -kInf;
            for (std::size_t i = job.begin; i < job.end; ++i) {
                const double v = col[idx[i]];
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            if (!(hi > lo)) {
                continue; // constant in this node; does not count towards mtry
            }
            ++visited;
            double thr = lo + rng.uniform() * (hi - lo);
            if (thr >= hi) {
                thr = lo;
            }
            std::size_t n_left = 0;
            std::size_t pos_left = 0;
            for (std::size_t i = job.begin; i < job.end; ++i) {
                const std::uint32_t r = idx[i];
                if (col[r] <= thr) {
                    ++n_left;
                    pos_left += static_cast<std::size_t>(y[r]);
                }
            }
            const double imp = weighted_gini(static_cast<double>(n_left), static_cast<double>(pos_left)) +
                               weighted_gini(static_cast<double>(n - n_left), static_cast<double>(pos - pos_left));
            if (best.improves_on(imp, f, thr)) {
                best = {imp, f, thr};
            }
        }
        if (best.feature < 0) {
            continue;
        }

        const std::size_t mid = stable_split(idx, scratch, job.begin, job.end,
                                             x.column(static_cast<std::size_t>(best.feature)), best.threshold);
        const int left = add_node(tree);
        const int right = add_node(tree);
        auto& node = tree.nodes[static_cast<std::size_t>(job.node)];
        node.feature = best.feature;
        node.threshold = best.threshold;
        node.left = left;
        node.right = right;
        stack.push_back({mid, job.end, right});
        stack.push_back({job.begin, mid, left});
    }
    return tree;
}

Tree build_random_tree(const ColumnData& x, std::span<const int> y, std::size_t min_split, std::size_t mtry, Rng& rng) {
    const std::size_t n_rows = x.rows;
    std::vector<double> weight(n_rows, 0.0);
    for (std::size_t i = 0; i < n_rows; ++i) {
        weight[rng.below(n_rows)] += 1.0;
    }
    std::vector<std::uint32_t> idx;
    for (std::uint32_t i = 0; i < n_rows; ++i) {
        if (weight[i] > 0.0) {
            idx.push_back(i);
        }
    }

    Tree tree;
    std::vector<std::uint32_t> scratch;
    std::vector<int> pool(x.cols);
    std::vector<std::pair<double, std::uint32_t>> sorted;

    std::vector<Pending> stack{{0, idx.size(), add_node(tree)}};
    while (!stack.empty()) {
        const Pending job = stack.back();
        stack.pop_back();
        const std::size_t n = job.end - job.begin;
        double w = 0.0;
        double w_pos = 0.0;
        for (std::size_t i = job.begin; i < job.end; ++i) {
            w += weight[idx[i]];
            w_pos += weight[idx[i]] * y[idx[i]];
        }
        tree.nodes[static_cast<std::size_t>(job.node)].value = w_pos / w;
        if (n < min_split || w_pos == 0.0 || w_pos == w) {
            continue;
        }

        std::iota(pool.begin(), pool.end(), 0);
        std::size_t remaining = pool.size();
        std::size_t visited = 0;
        SplitChoice best;
        while (remaining > 0 && visited < mtry) {
            const std::size_t pick = rng.below(remaining);
            const int f = pool[pick];
            std::swap(pool[pick], pool[remaining - 1]);
            --remaining;

            const double* col = x.column(static_cast<std::size_t>(f));
            sorted.clear();
            for (std::size_t i = job.begin; i < job.end; ++i) {
                sorted.emplace_back(col[idx[i]], idx[i]);
            }
            std::sort(sorted.begin(), sorted.end());
            if (!(sorted.back().first > sorted.front().first)) {
                continue;
            }
            ++visited;
            double w_left = 0.0;
            double w_pos_left = 0.0;
            for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
                const double wi = weight[sorted[i].second];
                w_left += wi;
                w_pos_left += wi * y[sorted[i].second];
                const double v = sorted[i].first;
                const double next = sorted[i + 1].first;
                if (!(next > v)) {
                    continue;
                }
                const double imp = weighted_gini(w_left, w_pos_left) + weighted_gini(w - w_left, w_pos - w_pos_left);
                double thr = v + (next - v) / 2.0;
                if (thr >= next) {
                    thr = v;
                }
                if (best.improves_on(imp, f, thr)) {
                    best = {imp, f, thr};
                }
            }
        }
        if (best.feature < 0) {
            continue;
        }

        const std::size_t mid = stable_split(idx, scratch, job.begin, job.end,
                                             x.column(static_cast<std::size_t>(best.feature)), best.threshold);
        const int left = add_node(tree);
        const int right = add_node(tree);
        auto& node = tree.nodes[static_cast<std::size_t>(job.node)];
        node.feature = best.feature;
        node.threshold = best.threshold;
        node.left = left;
        node.right = right;
        stack.push_back({mid, job.end, right});
        stack.push_back({job.begin, mid, left});
    }
    return tree;
}

std::vector<std::vector<std::uint32_t>> presort_columns(const ColumnData& x) {
    std::vector<std::vector<std::uint32_t>> out(x.cols);
    for (std::size_t c = 0; c < x.cols; ++c) {
        auto& order = out[c];
        order.resize(x.rows);
        std::iota(order.begin(), order.end(), 0u);
        const double* col = x.column(c);
        std::stable_sort(order.begin(), order.end(), [col](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
    }
    return out;
}

Tree build_boost_tree(const ColumnData& x, const std::vector<std::vector<std::uint32_t>>& sorted,
                      std::span<const double> residual, std::span<const double> hessian,
                      std::span<const std::uint8_t> in_bag, std::size_t min_split, int max_depth, double learning_rate) {
    const std::size_t n_rows = x.rows;
    Tree tree;
    add_node(tree);
    std::vector<int> node_of(n_rows, -1);
    for (std::size_t i = 0; i < n_rows; ++i) {
        if (in_bag[i]) {
            node_of[i] = 0;
        }
    }

    struct Stats {
        double g = 0.0;
        std::size_t n = 0;
    };
    struct Best {
        double score = 0.0;
        int feature = -1;
        double threshold = 0.0;
    };

    std::vector<int> level{0};
    for (int depth = 0; depth < max_depth && !level.empty(); ++depth) {
        const std::size_t node_count = tree.nodes.size();
        std::vector<Stats> total(node_count);
        for (std::size_t i = 0; i < n_rows; ++i) {
            if (node_of[i] >= 0) {
                total[static_cast<std::size_t>(node_of[i])].g += residual[i];
                ++total[static_cast<std::size_t>(node_of[i])].n;
            }
        }
        std::vector<char> active(node_count, 0);
        bool any_active = false;
        for (int t : level) {
            const auto n = total[static_cast<std::size_t>(t)].n;
            if (n >= min_split && n >= 2) {
                active[static_cast<std::size_t>(t)] = 1;
                any_active = true;
            }
        }
        if (!any_active) {
            break;
        }

        std::vector<Best> best(node_count);
        std::vector<Stats> left(node_count);
        std::vector<double> last(node_count);
        for (std::size_t f = 0; f < x.cols; ++f) {
            const double* col = x.column(f);
            std::fill(left.begin(), left.end(), Stats{});
            for (std::uint32_t i : sorted[f]) {
                const int t = node_of[i];
                if (t < 0 || !active[static_cast<std::size_t>(t)]) {
                    continue;
                }
                const auto ti = static_cast<std::size_t>(t);
                const double v = col[i];
                Stats& l = left[ti];
                if (l.n > 0 && v > last[ti]) {
                    const Stats& all = total[ti];
                    const double nl = static_cast<double>(l.n);
                    const double nr = static_cast<double>(all.n - l.n);
                    const double diff = l.g / nl - (all.g - l.g) / nr;
                    const double score = nl * nr * diff * diff / static_cast<double>(all.n);
                    if (score > best[ti].score) {
                        double thr = last[ti] + (v - last[ti]) / 2.0;
                        if (thr >= v) {
                            thr = last[ti];
                        }
                        best[ti] = {score, static_cast<int>(f), thr};
                    }
                }
                l.g += residual[i];
                ++l.n;
                last[ti] = v;
            }
        }

        std::vector<int> next_level;
        for (int t : level) {
            const auto ti = static_cast<std::size_t>(t);
            if (!active[ti] || best[ti].feature < 0) {
                continue;
            }
            const int l = add_node(tree);
            const int r = add_node(tree);
            auto& node = tree.nodes[ti];
            node.feature = best[ti].feature;
            node.threshold = best[ti].threshold;
            node.left = l;
            node.right = r;
            next_level.push_back(l);
            next_level.push_back(r);
        }
        // Route in-bag rows of the split nodes to their children.
        for (std::size_t i = 0; i < n_rows; ++i) {
            const int t = node_of[i];
            if (t < 0) {
                continue;
            }
            const auto& node = tree.nodes[static_cast<std::size_t>(t)];
            if (node.feature >= 0) {
                node_of[i] = x.column(static_cast<std::size_t>(node.feature))[i] <= node.threshold ? node.left : node.right;
            }
        }
        level = std::move(next_level);
    }

    std::vector<double> g(tree.nodes.size(), 0.0);
    std::vector<double> h(tree.nodes.size(), 0.0);
    for (std::size_t i = 0; i < n_rows; ++i) {
        if (node_of[i] >= 0) {
            g[static_cast<std::size_t>(node_of[i])] += residual[i];
            h[static_cast<std::size_t>(node_of[i])] += hessian[i];
        }
    }
    for (std::size_t t = 0; t < tree.nodes.size(); ++t) {
        if (tree.nodes[t].feature < 0) {
            tree.nodes[t].value = h[t] > 1e-150 ? learning_rate * g[t] / h[t] : 0.0;
        }
    }
    return tree;
}

} // namespace touchauth::detail
