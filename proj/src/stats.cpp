#include "touchauth/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace touchauth::stats {

double mean(std::span<const double> v) {
    if (v.empty()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    double sum = 0.0;
    for (double x : v) {
        sum += x;
    }
    return sum / static_cast<double>(v.size());
}

double stddev(std::span<const double> v, int ddof) {
    const auto n = static_cast<long>(v.size());
    if (n - ddof <= 0) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) {
        ss += (x - m) * (x - m);
    }
    return std::sqrt(ss / static_cast<double>(n - ddof));
}

double percentile(std::span<const double> v, double q) {
    if (v.empty()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    std::vector<double> sorted(v.begin(), v.end());
    std::sort(sorted.begin(), sorted.end());
    const double pos = q / 100.0 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    if (frac == 0.0) {
        return sorted[lo];
    }
    // Written as a convex combination so the result never leaves [lo, hi].
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

double median(std::span<const double> v) { return percentile(v, 50.0); }

} // namespace touchauth::stats
