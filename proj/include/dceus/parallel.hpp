#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace dceus {

/// Runs fn(i) for i in [0, count) on up to `jobs` threads. Tasks must write
/// only to their own slot; the schedule never affects results. The first
/// exception (lowest index) is rethrown after all workers stop.
template <class Fn>
void parallel_for(std::size_t count, int jobs, Fn&& fn) {
  if (count == 0) return;
  const std::size_t workers = std::min<std::size_t>(std::max(jobs, 1), count);
  std::vector<std::exception_ptr> errors(count);
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace dceus
