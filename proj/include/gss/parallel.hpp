#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace gss::parallel {

/// Worker count for data-parallel loops. GSS_THREADS overrides the
/// hardware count.
inline int hardware_threads() {
  static int n = [] {
    if (const char* env = std::getenv("GSS_THREADS")) {
      int v = std::atoi(env);
      if (v > 0) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
  }();
  return n;
}

/// Runs body(i) for i in [0, n) split into contiguous blocks, one per thread.
/// Each index is processed exactly once and writes only its own outputs, so
/// results do not depend on the thread count.
inline void parallel_for(int64_t n, const std::function<void(int64_t)>& body,
                         int threads = 0) {
  if (threads <= 0) threads = hardware_threads();
  threads = static_cast<int>(std::min<int64_t>(threads, n));
  if (threads <= 1) {
    for (int64_t i = 0; i < n; ++i) body(i);
    return;
  }
  const int64_t chunk = (n + threads - 1) / threads;
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  auto run = [&](int64_t begin, int64_t end) {
    for (int64_t i = begin; i < end; ++i) body(i);
  };
  for (int t = 1; t < threads; ++t) {
    int64_t begin = t * chunk;
    int64_t end = std::min<int64_t>(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back(run, begin, end);
  }
  run(0, std::min<int64_t>(n, chunk));
  for (auto& th : pool) th.join();
}

}  // namespace gss::parallel
