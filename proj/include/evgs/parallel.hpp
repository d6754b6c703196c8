#pragma once

#include <cstddef>
#include <functional>

namespace evgs {

/// Worker thread cap. EVGS_THREADS (if set and >= 1) wins, otherwise the
/// hardware concurrency. Read once per process.
int thread_count();

/// Runs fn(i) for every i in [0, n). Work items must write disjoint state;
/// scheduling order is unspecified, so any reduction that needs a fixed
/// summation order must happen after this returns.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace evgs
