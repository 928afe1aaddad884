// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace expertfind::detail {

// Calls f(index, worker) for every index in [0, n) on up to `workers`
// threads. Work items must write to disjoint outputs; the first exception
// thrown by any item is rethrown after all threads join.
template <typename F>
void parallel_for(std::size_t n, int workers, F&& f) {
  const std::size_t threads =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i, 0);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  const auto run = [&](int worker) {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        f(i, worker);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < threads; ++w) pool.emplace_back(run, static_cast<int>(w));
  run(0);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline int worker_slots(int workers) { return std::max(workers, 1); }

}  // namespace expertfind::detail
