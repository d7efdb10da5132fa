#pragma once

// Worker pool sizing and a strided parallel loop. Results must be written to
// per-index slots so that the outcome never depends on scheduling.

#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace ssg {

// `requested` if nonzero, else the SSG_THREADS environment variable, else 1.
std::size_t worker_threads(std::size_t requested = 0);

// Calls fn(i) for i in [0, n) on up to `threads` workers. The first exception
// (by worker index) is rethrown after all workers finish.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& fn) {
  const std::size_t pool = threads < n ? threads : n;
  if (pool <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(pool);
  {
    std::vector<std::jthread> workers;
    workers.reserve(pool);
    for (std::size_t w = 0; w < pool; ++w)
      workers.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += pool) fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace ssg
