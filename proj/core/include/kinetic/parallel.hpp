#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace kinetic {

// Resolution order: explicit request > KINETIC_WORKERS > hardware threads.
int worker_count(int requested = 0);

// Process-wide default used when an op receives workers = 0 and the
// environment variable is unset. The CLI sets this from --workers.
void set_default_workers(int n);

// Runs f(i) for i in [0,n). Work distribution is dynamic but any result
// keyed by i is independent of thread count; the first exception (lowest
// index) is rethrown after all threads join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f,
                  int workers = 0);

// Deterministic reduction: evaluates per_index into an index-ordered buffer
// in parallel, then folds left in index order on the calling thread.
template <class T, class F>
std::vector<T> parallel_map(std::size_t n, F&& per_index, int workers = 0) {
  std::vector<T> out(n);
  parallel_for(
      n, [&](std::size_t i) { out[i] = per_index(i); }, workers);
  return out;
}

}  // namespace kinetic
