#pragma once

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace camo {

inline int thread_budget() {
  if (const char* env = std::getenv("CAMO_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

// Runs fn(i) for i in [0,n). Every index is handled by exactly one worker,
// so kernels that write disjoint per-index outputs produce bit-identical
// results regardless of the thread count.
template <typename Fn>
void parallel_for(int n, Fn&& fn, int max_threads = -1) {
  int nt = max_threads > 0 ? max_threads : thread_budget();
  if (nt > n) nt = n;
  if (nt <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(nt));
  for (int t = 0; t < nt; ++t) {
    pool.emplace_back([&] {
      for (int i; (i = next.fetch_add(1)) < n;) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace camo
