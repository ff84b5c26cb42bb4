#pragma once

#include <cstddef>
#include <functional>

namespace dot {

// Worker count from DOT_THREADS, else hardware concurrency (at least 1).
int default_worker_count();

// Runs fn(i) for i in [0, count) on up to `workers` threads. Work items are
// claimed dynamically; callers must make fn's effects order-independent.
// The first exception thrown by any item is rethrown after all threads join.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace dot
