#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace pdeopt {

/// Runs body(i) for i in [0, count) on up to n_threads workers. Each index is
/// processed exactly once; callers gather results from per-index slots in a
/// fixed order afterwards, so the outcome does not depend on thread count.
inline void parallel_for(int count, int n_threads, const std::function<void(int)>& body) {
  if (count <= 0) return;
  n_threads = std::max(1, std::min(n_threads, count));
  if (n_threads == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(n_threads);
  for (int t = 0; t < n_threads; ++t) {
    workers.emplace_back([&, t] {
      for (int i = t; i < count; i += n_threads) body(i);
    });
  }
  for (auto& w : workers) w.join();
}

}  // namespace pdeopt
