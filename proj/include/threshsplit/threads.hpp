#pragma once

#include <cstddef>
#include <functional>

namespace threshsplit {

// Resolves the worker count: explicit request > THRESHSPLIT_THREADS > hardware.
std::size_t thread_count(std::size_t requested = 0);

// Runs fn(i) for i in [0, n) on up to n_threads workers. Exceptions thrown by
// fn are captured and the first one is rethrown after all workers join.
// Callers that need deterministic output should write to preallocated slots.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  std::size_t n_threads = 0);

}  // namespace threshsplit
