#pragma once

#include <cstdint>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace sfr {

// Worker count used when a caller passes threads <= 0. Reads SFR_THREADS once.
inline int default_threads() {
  static const int n = [] {
    if (const char* env = std::getenv("SFR_THREADS")) {
      int v = std::atoi(env);
      if (v > 0) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
  }();
  return n;
}

// Runs fn(chunk_index) for chunk_index in [0, num_chunks). Chunks are fixed
// work units; the thread count only controls how they are interleaved, so any
// chunk-indexed output is identical for every thread count.
inline void parallel_chunks(int num_chunks, const std::function<void(int)>& fn,
                            int threads = 0) {
  if (threads <= 0) threads = default_threads();
  if (num_chunks <= 0) return;
  if (threads == 1 || num_chunks == 1) {
    for (int i = 0; i < num_chunks; ++i) fn(i);
    return;
  }
  if (threads > num_chunks) threads = num_chunks;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (int i = t; i < num_chunks; i += threads) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

// Data-parallel loop over [begin, end) split into contiguous ranges, one per
// chunk. fn(chunk_index, lo, hi).
inline void parallel_ranges(std::int64_t begin, std::int64_t end, int num_chunks,
                            const std::function<void(int, std::int64_t, std::int64_t)>& fn,
                            int threads = 0) {
  const std::int64_t n = end - begin;
  if (n <= 0) return;
  if (num_chunks > n) num_chunks = static_cast<int>(n);
  if (num_chunks < 1) num_chunks = 1;
  parallel_chunks(
      num_chunks,
      [&](int c) {
        const std::int64_t lo = begin + n * c / num_chunks;
        const std::int64_t hi = begin + n * (c + 1) / num_chunks;
        fn(c, lo, hi);
      },
      threads);
}

}  // namespace sfr
