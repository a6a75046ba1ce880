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
#ifndef FEDVAL_VALUATION_SCORES_H_
#define FEDVAL_VALUATION_SCORES_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedval/autodiff/gradients.h"
#include "fedval/models/dataset.h"
#include "fedval/models/model.h"
#include "fedval/trainer/trainer.h"

// Per-sample valuation scores: VoG, PLIS, loss and gradient norm.
namespace fedval {

enum class Metric { kVog, kPlis, kLoss, kGradnorm };
inline constexpr std::array<Metric, 4> kAllMetrics = {
    Metric::kVog, Metric::kPlis, Metric::kLoss, Metric::kGradnorm};

std::string ToString(Metric m);
// Accepts "vog", "plis", "loss", "gradnorm"; throws ConfigError otherwise.
Metric MetricFromString(const std::string& s);

// Input gradients of one sample at each of K checkpoints.
struct GradTrace {
  SampleId sample_id = 0;
  std::vector<Tensor> grads;
  std::vector<std::uint64_t> steps;
};

// Throws ConfigError when the store holds fewer than two snapshots.
GradTrace ComputeTrace(const CheckpointStore& checkpoints, const Sample& sample);

// Per-pixel standard deviation over checkpoints, sqrt((1/K) sum_t (S_t-mu)^2).
// `literal` instead evaluates sqrt(1/K) * sum_t (S_t-mu)^2.
Tensor VogPixelwise(const GradTrace& trace, bool literal = false);

// Mean over pixels.
double VogScalar(const Tensor& pixelwise);

// d/dx |grad_theta loss|^2 / sigma^2 at the state's parameters.
Tensor PlisMatrix(const ModelState& state, const Sample& sample, double sigma,
                  NestedMode mode = NestedMode::kReverseOverReverse);
Tensor PlisMatrixFromNested(const Tensor& nested, double sigma);

// Mean over channels of the largest singular value of each HxW slice. A
// 1-row or 1-column slice reduces to its vector 2-norm.
double PlisScore(const Tensor& matrix);

double LossScore(const ModelState& state, const Sample& sample);
double GradnormScore(const ModelState& state, const Sample& sample);

// Min-max scaling to [0, 1] within each label; a class whose scores are all
// equal maps to 0.5.
std::vector<double> NormalizePerClass(std::span<const double> raw,
                                      std::span<const std::size_t> labels);

// Raw and per-class normalized scores for each computed metric, in dataset
// order.
struct ScoreTable {
  std::vector<SampleId> ids;
  std::vector<std::size_t> labels;
  std::map<Metric, std::vector<double>> raw;
  std::map<Metric, std::vector<double>> normalized;

  std::size_t size() const { return ids.size(); }
  bool Has(Metric m) const { return raw.count(m) > 0; }
  // Throws ConfigError if the metric was not computed.
  const std::vector<double>& Raw(Metric m) const;
  const std::vector<double>& Normalized(Metric m) const;

  // Adds a metric column and its normalized counterpart.
  void Set(Metric m, std::vector<double> raw_scores);

  // CSV with header sample_id,label,metric,raw,normalized, one row per
  // (sample, metric), samples outer.
  void WriteCsv(const std::string& path) const;
  static ScoreTable ReadCsv(const std::string& path);

  friend bool operator==(const ScoreTable&, const ScoreTable&) = default;
};

struct ScoringOptions {
  std::vector<Metric> metrics = {kAllMetrics.begin(), kAllMetrics.end()};
  // Noise multiplier of the run; PLIS uses 1 when unset (non-private).
  std::optional<double> sigma;
  bool vog_literal = false;
  NestedMode nested_mode = NestedMode::kReverseOverReverse;
};

// Scores every sample of `dataset`. VoG uses the checkpoints; the other
// metrics use `final_state`.
ScoreTable ComputeScores(const ModelState& final_state,
                         const CheckpointStore& checkpoints,
                         const Dataset& dataset, const ScoringOptions& options);

}  // namespace fedval

#endif  // FEDVAL_VALUATION_SCORES_H_
