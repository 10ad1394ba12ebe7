#pragma once

// Minimal fork-join helper for running independent replicates.

#include <atomic>
#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace wrlab {

/// Calls fn(i) for i in [0, n) on up to `workers` threads. Exceptions are
/// captured per index and returned; a failing index does not stop the others.
template <typename Fn>
std::vector<std::exception_ptr> parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(workers, n);
  if (threads <= 1) {
    work();
    return errors;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  return errors;
}

}  // namespace wrlab
