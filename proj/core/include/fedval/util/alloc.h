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
#ifndef FEDVAL_UTIL_ALLOC_H_
#define FEDVAL_UTIL_ALLOC_H_

namespace fedval {

// Per-sample tapes allocate and free the same large buffers thousands of
// times. On glibc this raises the mmap and trim thresholds so those buffers
// are recycled from the heap instead of being faulted in afresh each time.
// Call once from main(); a no-op elsewhere.
void ConfigureAllocator();

}  // namespace fedval

#endif  // FEDVAL_UTIL_ALLOC_H_
