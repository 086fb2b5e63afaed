#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

namespace gazelens {

inline unsigned default_jobs() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

// Runs fn(i) for every i in [0, n). Indices are split into contiguous blocks,
// one per worker, and each worker visits its block in increasing order.
// Callers must only write to outputs disjoint per index, which makes the
// result identical to a sequential run for any job count.
//
// If fn throws, the worker stops its block and the exception thrown at the
// lowest index is rethrown on the calling thread after all workers join, so
// error identity does not depend on the job count either.
template <class F>
void parallel_for(std::size_t n, F&& fn, unsigned jobs = 0) {
  if (jobs == 0) jobs = default_jobs();
  jobs = static_cast<unsigned>(std::min<std::size_t>(jobs, n));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::mutex err_mutex;
  std::size_t err_index = n;
  std::exception_ptr err;
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  const std::size_t chunk = (n + jobs - 1) / jobs;
  for (unsigned w = 0; w < jobs; ++w) {
    const std::size_t lo = static_cast<std::size_t>(w) * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    workers.emplace_back([&fn, &err_mutex, &err_index, &err, lo, hi] {
      for (std::size_t i = lo; i < hi; ++i) {
        try {
          fn(i);
        } catch (...) {
          const std::lock_guard<std::mutex> lock(err_mutex);
          if (i < err_index) {
            err_index = i;
            err = std::current_exception();
          }
          return;
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace gazelens
