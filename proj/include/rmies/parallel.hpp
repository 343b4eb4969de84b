// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rmies/core.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace rmies {

/// Runs body(i) for i in [0, n) over `threads` workers using contiguous static
/// chunks. Output placement is the caller's responsibility; as long as body(i)
/// only writes slot i the result does not depend on the thread count.
template <typename Body>
void parallel_for(Index n, int threads, Body&& body) {
  if (threads <= 1 || n < 2) {
    for (Index i = 0; i < n; ++i) body(i);
    return;
  }
  const Index workers = std::min<Index>(threads, n);
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (Index w = 0; w < workers; ++w) {
    const Index begin = n * w / workers;
    const Index end = n * (w + 1) / workers;
    pool.emplace_back([&, begin, end] {
      try {
        for (Index i = begin; i < end; ++i) body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace rmies
