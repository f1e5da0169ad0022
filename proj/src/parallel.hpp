#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace negprompt {

// Worker cap from NEGPROMPT_THREADS (0 or unset = hardware concurrency).
inline std::size_t max_threads() {
  std::size_t cap = 0;
  if (const char* env = std::getenv("NEGPROMPT_THREADS")) {
    cap = static_cast<std::size_t>(std::strtoul(env, nullptr, 10));
  }
  if (cap == 0) {
    cap = std::thread::hardware_concurrency();
    if (cap == 0) cap = 1;
  }
  return cap;
}

// Runs fn(i) for every i in [0, count). Callers must write results to
// disjoint per-index slots so the outcome is thread-count independent.
inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(max_threads(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      constexpr std::size_t kChunk = 32;
      while (true) {
        const std::size_t start = next.fetch_add(kChunk);
        if (start >= count) return;
        const std::size_t end = std::min(count, start + kChunk);
        for (std::size_t i = start; i < end; ++i) fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace negprompt
