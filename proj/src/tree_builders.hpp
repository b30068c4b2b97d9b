#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "touchauth/classifiers.hpp"
#include "touchauth/random.hpp"

namespace touchauth::detail {

/// Column-major copy of a training matrix; split searches walk one
/// feature at a time.
struct ColumnData {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    explicit ColumnData(const Matrix& x);
    const double* column(std::size_t c) const { return values.data() + c * rows; }
};

/// Features examined per node: floor(sqrt(p)), at least one.
std::size_t features_per_split(std::size_t n_features);

/// Extremely randomized tree: one uniform threshold per candidate feature,
/// best Gini among the candidates. Leaves hold the genuine fraction.
Tree build_extra_tree(const ColumnData& x, std::span<const int> y, std::size_t min_split, std::size_t mtry, Rng& rng);

/// CART tree on a bootstrap sample with exhaustive threshold search over
/// `mtry` random features per node.
Tree build_random_tree(const ColumnData& x, std::span<const int> y, std::size_t min_split, std::size_t mtry, Rng& rng);

/// Row indices of every column, sorted by value (ties by index).
std::vector<std::vector<std::uint32_t>> presort_columns(const ColumnData& x);

/// Depth-limited regression tree on the negative gradient, grown level by
/// level with Friedman's improvement score. Leaves carry the Newton step
/// sum(residual) / sum(hessian), scaled by `learning_rate`.
Tree build_boost_tree(const ColumnData& x, const std::vector<std::vector<std::uint32_t>>& sorted,
                      std::span<const double> residual, std::span<const double> hessian,
                      std::span<const std::uint8_t> in_bag, std::size_t min_split, int max_depth, double learning_rate);

} // namespace touchauth::detail
