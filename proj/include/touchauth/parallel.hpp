#pragma once

#include <cstddef>
#include <functional>

namespace touchauth {

/// Runs task(i) for every i in [0, count) on up to `workers` threads.
/// Tasks are claimed from a shared counter, so callers must write results
/// into pre-sized, index-keyed storage. The first exception thrown by any
/// task is rethrown after all threads join.
void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& task);

} // namespace touchauth
