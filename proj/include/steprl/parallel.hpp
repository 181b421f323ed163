#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace steprl {

inline int resolve_thread_count(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n). Work items must be independent; results should be
// written into per-index slots so the outcome is identical for any thread count.
template <typename Fn>
void parallel_for_indexed(std::size_t n, int threads, Fn&& fn) {
  const int nt = resolve_thread_count(threads);
  if (nt <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(nt));
  for (int w = 0; w < nt; ++w) {
    pool.emplace_back([w, nt, n, &fn] {
      for (std::size_t i = static_cast<std::size_t>(w); i < n; i += static_cast<std::size_t>(nt)) {
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace steprl
