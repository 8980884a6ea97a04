#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace evidence {

/// Runs fn(i) for i in [0, n) on at most `max_workers` threads. Every index
/// runs even if some throw; afterwards the exception from the lowest failing
/// index is rethrown, so failures are reported deterministically.
template <class Fn>
void parallel_for(std::size_t n, std::size_t max_workers, Fn&& fn) {
  if (n == 0)
    return;
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(max_workers, 1, n);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e)
      std::rethrow_exception(e);
}

} // namespace evidence
