#pragma once

#include <span>
#include <vector>

namespace touchauth::stats {

double mean(std::span<const double> v);

/// Standard deviation with `ddof` delta degrees of freedom (0 = population).
double stddev(std::span<const double> v, int ddof = 0);

/// Percentile q in [0, 100] by linear interpolation between order
/// statistics. NaN for an empty input.
double percentile(std::span<const double> v, double q);

double median(std::span<const double> v);

} // namespace touchauth::stats
