#pragma once

#include <algorithm>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace overopt {

/// Runs body(i) for i in [0, count) on up to `threads` workers with static
/// contiguous chunks. The first exception thrown by any worker is rethrown.
/// Callers write results into per-index slots and reduce in index order, so
/// results do not depend on the thread count.
inline void parallel_for(int count, int threads, const std::function<void(int)>& body) {
  threads = std::clamp(threads, 1, std::max(count, 1));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      const int begin = count * t / threads;
      const int end = count * (t + 1) / threads;
      try {
        for (int i = begin; i < end; ++i) body(i);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace overopt
