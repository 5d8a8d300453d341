#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "levyint/rng.hpp"

namespace levyint {

/// Worker count: LEVYINT_THREADS if set and positive, else hardware concurrency.
inline unsigned default_parallelism() {
  if (const char* env = std::getenv("LEVYINT_THREADS")) {
    try {
      int v = std::stoi(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (...) {
    }
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

/// Runs fn(i, rng_i) for i in [0, n) on a bounded pool and returns the results
/// in replica order. rng_i is seeded from (seed, i) only, so the output is
/// independent of the worker count.
template <class Fn>
auto map_replicas(std::size_t n, std::uint64_t seed, Fn&& fn, unsigned width = 0) {
  using R = std::invoke_result_t<Fn&, std::size_t, Rng&>;
  std::vector<R> out(n);
  if (n == 0) return out;
  if (width == 0) width = default_parallelism();
  width = static_cast<unsigned>(std::min<std::size_t>(width, n));

  constexpr std::size_t kChunk = 64;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    try {
      for (;;) {
        std::size_t begin = next.fetch_add(kChunk);
        if (begin >= n) break;
        std::size_t end = std::min(n, begin + kChunk);
        for (std::size_t i = begin; i < end; ++i) {
          Rng rng(seed, i);
          out[i] = fn(i, rng);
        }
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next.store(n);
    }
  };

  if (width == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(width);
    for (unsigned w = 0; w < width; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace levyint
