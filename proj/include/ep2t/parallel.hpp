#pragma once

#include <cstddef>
#include <functional>

namespace ep2t {

/// Thread count from E2P_THREADS when set and positive, else hardware concurrency.
int default_thread_count();

/// Clamps a requested count to [1, E2P_THREADS cap]; 0 means "use the default".
int resolve_thread_count(int requested);

/// Splits [0, n) into contiguous chunks, one per thread, and calls body(begin, end)
/// on each. Chunk boundaries depend on the thread count, so callers must only
/// write to slots owned by their own indices.
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace ep2t
