#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace eqfree {

/// Process-wide worker cap, shared by all parallel loops. The CLI sets it
/// from --threads / EQFREE_THREADS; library default is the hardware count.
inline int& thread_cap() {
  static int cap = std::max(1u, std::thread::hardware_concurrency());
  return cap;
}

/// Run body(begin, end) over a partition of [0, n). Falls back to a single
/// inline call when capped at one worker or the range is small. The first
/// exception thrown by any worker is rethrown on the calling thread.
inline void parallel_for_blocks(std::size_t n,
                                const std::function<void(std::size_t, std::size_t)>& body,
                                std::size_t min_per_worker = 1) {
  if (n == 0) return;
  std::size_t workers = static_cast<std::size_t>(std::max(1, thread_cap()));
  workers = std::min(workers, (n + min_per_worker - 1) / min_per_worker);
  if (workers <= 1) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::mutex error_mutex;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace eqfree
