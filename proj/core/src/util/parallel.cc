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
#include "fedval/util/parallel.h"

#include <atomic>

namespace fedval {
namespace {

std::atomic<std::size_t>& WorkerSetting() {
  static std::atomic<std::size_t> workers{
      std::max<std::size_t>(1, std::thread::hardware_concurrency())};
  return workers;
}

}  // namespace

namespace internal {
bool& InParallelRegion() {
  thread_local bool in_region = false;
  return in_region;
}
}  // namespace internal

std::size_t WorkerCount() { return WorkerSetting().load(); }

void SetWorkerCount(std::size_t n) {
  WorkerSetting().store(std::max<std::size_t>(1, n));
}

}  // namespace fedval
