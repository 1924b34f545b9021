#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace wfd {

// Index-parallel loop with deterministic work assignment. Each index is
// processed exactly once; callers own any per-index output slots, so results
// land in index order regardless of thread interleaving.
inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (std::thread& t : pool) t.join();
}

}  // namespace wfd
