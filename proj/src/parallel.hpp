#pragma once

#include <functional>

namespace mplreg {

/// Worker count for voxel loops: hardware concurrency, capped by the
/// MPLREG_THREADS environment variable when it is set.
int worker_count();

/// Override for the current process (0 restores the environment default).
void set_worker_count(int n);

/// Calls fn(k) for every k in [0, n). Work is split into contiguous blocks,
/// one per worker. Callers that reduce must store per-k partials and combine
/// them in index order so results do not depend on the worker count.
void parallel_for(int n, const std::function<void(int)>& fn);

} // namespace mplreg
