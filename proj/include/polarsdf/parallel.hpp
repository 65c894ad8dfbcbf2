#pragma once

#include <cstddef>
#include <functional>

namespace polarsdf {

/// Worker count: `requested` if positive, else POLARSDF_THREADS, else 1.
int thread_count(int requested = 0);

/// Runs fn(i) for i in [0, n) on up to `threads` workers with static
/// contiguous chunks. The first exception thrown is rethrown after joining.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

} // namespace polarsdf
