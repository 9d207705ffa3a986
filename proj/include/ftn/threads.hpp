#pragma once

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace ftn {

// Worker count for intra-op parallelism. FTN_THREADS overrides; 0 keeps
// the hardware default.
inline int worker_count() {
  static const int n = [] {
    if (const char* env = std::getenv("FTN_THREADS")) {
      int v = std::atoi(env);
      if (v > 0) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
  }();
  return n;
}

// Static partition of [0, n) across workers. Each index is visited exactly
// once and workers own disjoint ranges, so results are identical for any
// worker count as long as the body only writes state indexed by i.
template <class F>
void parallel_for(int n, F&& body, int min_per_worker = 8) {
  if (n <= 0) return;
  int workers = std::min(worker_count(), std::max(1, n / min_per_worker));
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  int chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    int lo = w * chunk;
    int hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] {
      for (int i = lo; i < hi; ++i) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace ftn
