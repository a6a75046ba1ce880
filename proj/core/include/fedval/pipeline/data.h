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
#ifndef FEDVAL_PIPELINE_DATA_H_
#define FEDVAL_PIPELINE_DATA_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>

#include "fedval/models/dataset.h"

namespace fedval {

// IDX image (magic 0x00000803, u8 pixels, dims n,rows,cols) and label
// (0x00000801) files. Pixels are scaled to [0, 1]; ids are record indices.
// Throws IoError on bad magic, truncation or mismatched counts.
Dataset LoadIdx(const std::string& images_path,
                const std::string& labels_path);

// CIFAR binary records: 1 label byte then 3072 channel-major RGB 32x32
// bytes. Throws IoError when the length is not a multiple of 3073 or a
// label is >= 10.
Dataset LoadCifarBin(const std::string& path);

struct SynthSpec {
  std::size_t n = 1000;
  std::size_t classes = 10;
  std::size_t image_size = 12;
  std::size_t channels = 1;
  // Fraction of samples drawn as atypical: displaced, low-contrast blobs.
  double atypical_fraction = 0.1;
  // Blob radius and per-sample centre jitter, in pixels.
  double blob_sigma = 1.5;
  double jitter = 0.6;
  // Stdev of additive pixel noise.
  double noise = 0.05;
  // Displacement of atypical blobs in pixels and their contrast factor.
  double atypical_shift = 2.5;
  double atypical_contrast = 0.45;
  // Minimum distance between class centres in pixels; centres are redrawn
  // (up to 1000 times) until they are this far apart.
  double min_center_distance = 2.0;
  // Fraction of samples whose label is replaced by a different class.
  // Drawn independently of the atypical flag.
  double label_noise = 0.0;
};

// Gaussian-blob images: each class has a fixed centre; samples jitter around
// it. Exactly round(atypical_fraction * n) samples are atypical and flagged.
// Images cycle through the classes; exactly round(label_noise * n) samples
// then carry a wrong label. Throws ConfigError for classes < 2.
Dataset SynthDataset(const SynthSpec& spec, std::uint64_t seed);

// Seeded shuffle; the first round(test_fraction * n) samples form the test
// split. Ids are preserved.
std::pair<Dataset, Dataset> SplitTrainTest(const Dataset& dataset,
                                           double test_fraction,
                                           std::uint64_t seed);

// Seeded subset of `size` samples (all if size >= n), in original order.
Dataset SubsetDataset(const Dataset& dataset, std::size_t size,
                      std::uint64_t seed);

}  // namespace fedval

#endif  // FEDVAL_PIPELINE_DATA_H_
