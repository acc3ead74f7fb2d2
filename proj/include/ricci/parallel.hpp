#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ricci {

/// Worker count used when parallel_for is called without an explicit limit
/// (0 means one per hardware thread).
inline std::atomic<unsigned>& default_thread_count() {
  static std::atomic<unsigned> n{0};
  return n;
}

/// Runs body(i) for i in [0, n) on a fixed pool of threads with static chunks.
/// Each index writes only its own outputs, so results do not depend on the schedule.
/// If any index throws, one of the exceptions is rethrown on the caller.
template <typename Body>
void parallel_for(std::size_t n, Body&& body, unsigned max_threads = 0) {
  unsigned threads = max_threads ? max_threads : default_thread_count().load();
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      const std::size_t lo = n * w / threads, hi = n * (w + 1) / threads;
      try {
        for (std::size_t i = lo; i < hi; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace ricci
