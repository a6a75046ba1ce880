// Copyright 2026 The fedval Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#ifndef FEDVAL_UTIL_PARALLEL_H_
#define FEDVAL_UTIL_PARALLEL_H_

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace fedval {

// Number of workers used by ParallelFor. Defaults to the hardware
// concurrency; 1 disables threading.
std::size_t WorkerCount();
void SetWorkerCount(std::size_t n);

namespace internal {
// True on threads started by ParallelFor; nested loops then run inline.
bool& InParallelRegion();
}  // namespace internal

// Runs fn(i) for i in [0, n) across WorkerCount() threads using static
// contiguous chunks. fn must only write to per-index slots, which keeps
// results independent of the thread count. The first exception thrown by any
// worker is rethrown on the calling thread. Nested calls run serially.
template <typename Fn>
void ParallelFor(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min(WorkerCount(), n);
  if (workers <= 1 || internal::InParallelRegion()) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    threads.emplace_back([&, begin, end] {
      internal::InParallelRegion() = true;
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace fedval

#endif  // FEDVAL_UTIL_PARALLEL_H_
