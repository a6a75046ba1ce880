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
#include "fedval/consistency/consistency.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "fedval/util/errors.h"
#include "fedval/util/parallel.h"

namespace fedval {
namespace {

constexpr double kBcFloor = 1e-12;

struct Planes {
  std::size_t channels, rows, cols;
};

Planes PlanesOf(const Tensor& t) {
  const Shape& s = t.shape();
  if (s.size() == 3) return {s[0], s[1], s[2]};
  if (s.size() == 2) return {1, s[0], s[1]};
  throw ShapeError("SSIM expects a [C,H,W] or [H,W] image, got " +
                   ShapeToString(s));
}

}  // namespace

double Ssim(const Tensor& a, const Tensor& b, double dynamic_range) {
  if (a.shape() != b.shape()) {
    throw ShapeError("SSIM of mismatched shapes " + ShapeToString(a.shape()) +
                     " and " + ShapeToString(b.shape()));
  }
  const Planes p = PlanesOf(a);
  if (p.rows < kSsimWindow || p.cols < kSsimWindow) {
    throw ShapeError("image " + ShapeToString(a.shape()) +
                     " is smaller than the 8x8 SSIM window");
  }
  const double c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
  const double c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
  const double n = kSsimWindow * kSsimWindow;
  const std::size_t wr = p.rows - kSsimWindow + 1;
  const std::size_t wc = p.cols - kSsimWindow + 1;
  double total = 0.0;
  for (std::size_t c = 0; c < p.channels; ++c) {
    const double* x = a.data().data() + c * p.rows * p.cols;
    const double* y = b.data().data() + c * p.rows * p.cols;
    double channel = 0.0;
    for (std::size_t i = 0; i < wr; ++i) {
      for (std::size_t j = 0; j < wc; ++j) {
        double sx = 0, sy = 0;
        for (std::size_t u = 0; u < kSsimWindow; ++u) {
          for (std::size_t v = 0; v < kSsimWindow; ++v) {
            sx += x[(i + u) * p.cols + j + v];
            sy += y[(i + u) * p.cols + j + v];
          }
        }
        const double mx = sx / n, my = sy / n;
        double vx = 0, vy = 0, cxy = 0;
        for (std::size_t u = 0; u < kSsimWindow; ++u) {
          for (std::size_t v = 0; v < kSsimWindow; ++v) {
            const double dx = x[(i + u) * p.cols + j + v] - mx;
            const double dy = y[(i + u) * p.cols + j + v] - my;
            vx += dx * dx;
            vy += dy * dy;
            cxy += dx * dy;
          }
        }
        vx /= n;
        vy /= n;
        cxy /= n;
        channel += ((2 * mx * my + c1) * (2 * cxy + c2)) /
                   ((mx * mx + my * my + c1) * (vx + vy + c2));
      }
    }
    total += channel / static_cast<double>(wr * wc);
  }
  return total / static_cast<double>(p.channels);
}

double BhattacharyyaFromHistograms(std::span<const double> p,
                                   std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) {
    throw ShapeError("histograms must be nonempty and of equal length");
  }
  double bc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) bc += std::sqrt(p[i] * q[i]);
  // Rounding can push bc of identical histograms just above 1.
  return -std::log(std::clamp(bc, kBcFloor, 1.0));
}

std::vector<double> PixelHistogram(std::span<const Tensor> images,
                                   std::size_t bins) {
  if (images.empty()) throw ConfigError("histogram of an empty image set");
  if (bins == 0) throw ConfigError("histogram needs at least one bin");
  std::vector<double> h(bins, 0.0);
  double count = 0.0;
  for (const Tensor& img : images) {
    for (double v : img.data()) {
      if (v < 0.0 || v > 1.0) {
        throw ConfigError("pixel value " + std::to_string(v) +
                          " outside [0, 1]");
      }
      const std::size_t bin =
          std::min(bins - 1, static_cast<std::size_t>(v * bins));
      h[bin] += 1.0;
      count += 1.0;
    }
  }
  for (double& v : h) v /= count;
  return h;
}

double BhattacharyyaDistance(std::span<const Tensor> a,
                             std::span<const Tensor> b, std::size_t bins) {
  if (a.empty() || b.empty()) {
    throw ConfigError("Bhattacharyya distance needs nonempty image sets");
  }
  return BhattacharyyaFromHistograms(PixelHistogram(a, bins),
                                     PixelHistogram(b, bins));
}

double Pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw ConfigError("Pearson correlation of vectors of unequal length");
  }
  if (xs.size() < 2) {
    throw ConfigError("Pearson correlation needs at least 2 points");
  }
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw NumericError("Pearson correlation is undefined for a constant "
                       "vector");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<std::size_t> TopK(std::span<const SampleId> ids,
                              std::span<const double> scores, std::size_t k) {
  if (ids.size() != scores.size()) {
    throw ConfigError("top-k needs one score per id");
  }
  if (k == 0 || k > ids.size()) {
    throw ConfigError("top-k size " + std::to_string(k) +
                      " must lie in [1, " + std::to_string(ids.size()) + "]");
  }
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&](std::size_t x, std::size_t y) {
                      if (scores[x] != scores[y]) return scores[x] > scores[y];
                      return ids[x] < ids[y];
                    });
  order.resize(k);
  return order;
}

std::size_t TopkOverlap(std::span<const SampleId> ids,
                        std::span<const double> scores_a,
                        std::span<const double> scores_b, std::size_t k) {
  std::vector<std::size_t> a = TopK(ids, scores_a, k);
  std::vector<std::size_t> b = TopK(ids, scores_b, k);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<std::size_t> both;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                        std::back_inserter(both));
  return both.size();
}

std::string ToString(Pairing p) {
  return p == Pairing::kRankAligned ? "rank-aligned" : "best-match";
}

Pairing PairingFromString(const std::string& s) {
  if (s == "rank-aligned") return Pairing::kRankAligned;
  if (s == "best-match") return Pairing::kBestMatch;
  throw ConfigError("unknown SSIM pairing '" + s +
                    "' (expected rank-aligned or best-match)");
}

nlohmann::json SelectionComparison::ToJson() const {
  nlohmann::json j;
  j["settings"] = {setting_a, setting_b};
  j["metric"] = metric;
  j["k"] = k;
  j["pairing"] = ToString(pairing);
  j["ssim_mean"] = ssim_mean;
  j["bd"] = bd;
  j["pearson_r"] = pearson_r ? nlohmann::json(*pearson_r) : nlohmann::json();
  j["topk_overlap"] = topk_overlap;
  j["top_a"] = top_a;
  j["top_b"] = top_b;
  return j;
}

SelectionComparison CompareSelections(const Dataset& dataset,
                                      std::span<const SampleId> ids,
                                      std::span<const double> scores_a,
                                      std::span<const double> scores_b,
                                      std::size_t k, Pairing pairing) {
  if (ids.size() != dataset.size() || scores_a.size() != ids.size() ||
      scores_b.size() != ids.size()) {
    throw ConfigError("compared score vectors must cover the same dataset");
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] != dataset.samples[i].id) {
      throw ConfigError("score ids do not follow the dataset order");
    }
  }
  SelectionComparison out;
  out.k = k;
  out.pairing = pairing;
  std::vector<std::size_t> ta = TopK(ids, scores_a, k);
  std::vector<std::size_t> tb = TopK(ids, scores_b, k);
  std::vector<Tensor> imgs_a, imgs_b;
  for (std::size_t i = 0; i < k; ++i) {
    imgs_a.push_back(dataset.samples[ta[i]].image);
    imgs_b.push_back(dataset.samples[tb[i]].image);
    out.top_a.push_back(ids[ta[i]]);
    out.top_b.push_back(ids[tb[i]]);
  }
  std::vector<double> pair_ssim(k);
  ParallelFor(k, [&](std::size_t i) {
    if (pairing == Pairing::kRankAligned) {
      pair_ssim[i] = Ssim(imgs_a[i], imgs_b[i]);
    } else {
      double best = -1.0;
      for (std::size_t j = 0; j < k; ++j) {
        best = std::max(best, Ssim(imgs_a[i], imgs_b[j]));
      }
      pair_ssim[i] = best;
    }
  });
  out.ssim_mean =
      std::accumulate(pair_ssim.begin(), pair_ssim.end(), 0.0) / double(k);
  out.bd = BhattacharyyaDistance(imgs_a, imgs_b);
  try {
    out.pearson_r = Pearson(scores_a, scores_b);
  } catch (const NumericError&) {
    out.pearson_r.reset();
  }
  out.topk_overlap = TopkOverlap(ids, scores_a, scores_b, k);
  return out;
}

}  // namespace fedval
