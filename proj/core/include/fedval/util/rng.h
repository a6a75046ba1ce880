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
#ifndef FEDVAL_UTIL_RNG_H_
#define FEDVAL_UTIL_RNG_H_

#include <cstdint>
#include <random>
#include <string_view>

namespace fedval {

using Rng = std::mt19937_64;

// Derives an independent stream seed from a master seed and a stream name, so
// that e.g. init, sampling and noise never share state.
std::uint64_t DeriveSeed(std::uint64_t master, std::string_view stream);

inline Rng MakeRng(std::uint64_t master, std::string_view stream) {
  return Rng(DeriveSeed(master, stream));
}

// Laplace(0, scale) as the difference of two Exp(1/scale) draws.
double SampleLaplace(Rng& rng, double scale);

}  // namespace fedval

#endif  // FEDVAL_UTIL_RNG_H_
