#pragma once

#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace csepose {

// Deterministic parallel loop: fixed contiguous chunking, no atomics, results
// depend only on the loop body. Falls back to serial for small ranges.
inline void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body,
                         std::int64_t grain = 256) {
  const unsigned hw = std::thread::hardware_concurrency();
  const std::int64_t max_threads = hw == 0 ? 1 : static_cast<std::int64_t>(hw);
  std::int64_t threads = std::min<std::int64_t>(max_threads, (n + grain - 1) / grain);
  if (threads <= 1) {
    body(0, n);
    return;
  }
  const std::int64_t chunk = (n + threads - 1) / threads;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads) - 1);
  for (std::int64_t t = 1; t < threads; ++t) {
    const std::int64_t lo = t * chunk;
    const std::int64_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  body(0, std::min(n, chunk));
  for (auto& th : pool) th.join();
}

}  // namespace csepose
