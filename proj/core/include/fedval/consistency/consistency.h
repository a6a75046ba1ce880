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
#ifndef FEDVAL_CONSISTENCY_CONSISTENCY_H_
#define FEDVAL_CONSISTENCY_CONSISTENCY_H_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedval/autodiff/tensor.h"
#include "fedval/models/dataset.h"

// Agreement between the samples two settings select: image similarity of the
// selections and agreement of the score vectors.
namespace fedval {

inline constexpr std::size_t kSsimWindow = 8;
inline constexpr std::size_t kHistogramBins = 64;

// Mean SSIM over all 8x8 windows (stride 1) of each channel, averaged over
// channels, with C1 = (0.01 L)^2, C2 = (0.03 L)^2 and population moments.
// Accepts [C,H,W] or [H,W]. Throws ShapeError on mismatched shapes or images
// smaller than the window.
double Ssim(const Tensor& a, const Tensor& b, double dynamic_range = 1.0);

// -ln(sum_i sqrt(p_i q_i)) with the coefficient floored at 1e-12. Inputs are
// normalized histograms of equal length.
double BhattacharyyaFromHistograms(std::span<const double> p,
                                   std::span<const double> q);

// Normalized histogram of all pixels (in [0, 1]) of a set of images.
std::vector<double> PixelHistogram(std::span<const Tensor> images,
                                   std::size_t bins = kHistogramBins);

// Distance between the pooled pixel histograms of two nonempty image sets.
double BhattacharyyaDistance(std::span<const Tensor> a,
                             std::span<const Tensor> b,
                             std::size_t bins = kHistogramBins);

// Sample Pearson correlation. Throws NumericError when either vector has zero
// variance (the coefficient is undefined) and ConfigError on bad lengths.
double Pearson(std::span<const double> xs, std::span<const double> ys);

// Positions of the k highest scores, best first; ties go to the smaller id.
std::vector<std::size_t> TopK(std::span<const SampleId> ids,
                              std::span<const double> scores, std::size_t k);

// |top-k(a) & top-k(b)| over a shared id universe.
std::size_t TopkOverlap(std::span<const SampleId> ids,
                        std::span<const double> scores_a,
                        std::span<const double> scores_b, std::size_t k);

enum class Pairing { kRankAligned, kBestMatch };
std::string ToString(Pairing p);
Pairing PairingFromString(const std::string& s);

struct SelectionComparison {
  std::string setting_a;
  std::string setting_b;
  std::string metric;
  std::size_t k = 0;
  Pairing pairing = Pairing::kRankAligned;
  double ssim_mean = 0.0;
  double bd = 0.0;
  // Unset when a score vector has zero variance.
  std::optional<double> pearson_r;
  std::size_t topk_overlap = 0;
  // Selected ids, best first.
  std::vector<SampleId> top_a;
  std::vector<SampleId> top_b;

  // {settings, metric, k, pairing, ssim_mean, bd, pearson_r, topk_overlap,
  // top_a, top_b}.
  nlohmann::json ToJson() const;
};

// Compares two score vectors over the same samples of `dataset` (in dataset
// order): selects the top-k by each, then SSIM over image pairs, BD between
// the pooled selections, Pearson over the full vectors and top-k overlap.
SelectionComparison CompareSelections(const Dataset& dataset,
                                      std::span<const SampleId> ids,
                                      std::span<const double> scores_a,
                                      std::span<const double> scores_b,
                                      std::size_t k,
                                      Pairing pairing = Pairing::kRankAligned);

}  // namespace fedval

#endif  // FEDVAL_CONSISTENCY_CONSISTENCY_H_
