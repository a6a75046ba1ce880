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
#ifndef FEDVAL_MODELS_DATASET_H_
#define FEDVAL_MODELS_DATASET_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedval/autodiff/tensor.h"

namespace fedval {

using SampleId = std::uint64_t;

// One labeled image. `id` is stable across subsetting and partitioning.
struct Sample {
  SampleId id = 0;
  std::uint32_t client = 0;
  std::size_t label = 0;
  Tensor image;
  // Ground-truth flags set by the synthetic generator only.
  bool atypical = false;
  bool mislabeled = false;
};

struct Dataset {
  Shape input_shape;  // [C,H,W]
  std::size_t num_classes = 0;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  // New dataset holding the samples at the given positions, in order.
  Dataset Select(std::span<const std::size_t> positions) const;
  // Labels in sample order.
  std::vector<std::size_t> Labels() const;
};

}  // namespace fedval

#endif  // FEDVAL_MODELS_DATASET_H_
