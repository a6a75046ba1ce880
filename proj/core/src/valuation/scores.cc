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
#include "fedval/valuation/scores.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <utility>

#include <Eigen/Dense>

#include "fedval/util/errors.h"
#include "fedval/util/parallel.h"

namespace fedval {

std::string ToString(Metric m) {
  switch (m) {
    case Metric::kVog:
      return "vog";
    case Metric::kPlis:
      return "plis";
    case Metric::kLoss:
      return "loss";
    case Metric::kGradnorm:
      return "gradnorm";
  }
  return "unknown";
}

Metric MetricFromString(const std::string& s) {
  for (Metric m : kAllMetrics) {
    if (ToString(m) == s) return m;
  }
  throw ConfigError("unknown metric '" + s +
                    "' (expected vog, plis, loss or gradnorm)");
}

GradTrace ComputeTrace(const CheckpointStore& checkpoints,
                       const Sample& sample) {
  if (checkpoints.size() < 2) {
    throw ConfigError("VoG needs at least 2 checkpoints, got " +
                      std::to_string(checkpoints.size()));
  }
  GradTrace trace;
  trace.sample_id = sample.id;
  for (const Checkpoint& c : checkpoints.checkpoints()) {
    trace.grads.push_back(GradInput(c.state.params, *c.state.spec,
                                    sample.image, sample.label));
    trace.steps.push_back(c.step);
  }
  return trace;
}

Tensor VogPixelwise(const GradTrace& trace, bool literal) {
  const std::size_t k = trace.grads.size();
  if (k < 2) throw ConfigError("VoG trace needs at least 2 gradients");
  const Shape& shape = trace.grads[0].shape();
  for (const Tensor& g : trace.grads) {
    if (g.shape() != shape) {
      throw ShapeError("VoG trace mixes shapes " + ShapeToString(shape) +
                       " and " + ShapeToString(g.shape()));
    }
  }
  const std::size_t n = trace.grads[0].size();
  std::vector<double> out(n);
  for (std::size_t p = 0; p < n; ++p) {
    // Shifted by the first gradient so that a constant trace is exactly 0.
    const double ref = trace.grads[0][p];
    double mean = 0.0;
    for (const Tensor& g : trace.grads) mean += g[p] - ref;
    mean = ref + mean / static_cast<double>(k);
    double ss = 0.0;
    for (const Tensor& g : trace.grads) ss += (g[p] - mean) * (g[p] - mean);
    out[p] = literal ? std::sqrt(1.0 / k) * ss : std::sqrt(ss / k);
  }
  return Tensor(shape, std::move(out));
}

double VogScalar(const Tensor& pixelwise) {
  double s = 0.0;
  for (double v : pixelwise.data()) s += v;
  return s / static_cast<double>(pixelwise.size());
}

Tensor PlisMatrixFromNested(const Tensor& nested, double sigma) {
  if (!(sigma > 0.0)) {
    throw ConfigError("PLIS needs sigma > 0, got " + std::to_string(sigma));
  }
  Tensor out = nested;
  const double inv = 1.0 / (sigma * sigma);
  for (double& v : out.mutable_data()) v *= inv;
  return out;
}

Tensor PlisMatrix(const ModelState& state, const Sample& sample, double sigma,
                  NestedMode mode) {
  if (!(sigma > 0.0)) {
    throw ConfigError("PLIS needs sigma > 0, got " + std::to_string(sigma));
  }
  return PlisMatrixFromNested(
      GradInputOfSqParamGradNorm(state.params, *state.spec, sample.image,
                                 sample.label, mode),
      sigma);
}

double PlisScore(const Tensor& matrix) {
  const Shape& s = matrix.shape();
  std::size_t channels = 1, rows = 1, cols = matrix.size();
  if (s.size() == 3) {
    channels = s[0];
    rows = s[1];
    cols = s[2];
  } else if (s.size() == 2) {
    rows = s[0];
    cols = s[1];
  } else if (s.size() != 1) {
    throw ShapeError("PLIS score expects a [C,H,W], [H,W] or vector tensor, "
                     "got " + ShapeToString(s));
  }
  const std::size_t plane = rows * cols;
  double total = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    const double* base = matrix.data().data() + c * plane;
    if (rows == 1 || cols == 1) {
      double ss = 0.0;
      for (std::size_t i = 0; i < plane; ++i) ss += base[i] * base[i];
      total += std::sqrt(ss);
      continue;
    }
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>
        m(base, rows, cols);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    total += svd.singularValues()(0);
  }
  return total / static_cast<double>(channels);
}

double LossScore(const ModelState& state, const Sample& sample) {
  return PerSampleLoss(state.params, *state.spec, sample.image, sample.label);
}

double GradnormScore(const ModelState& state, const Sample& sample) {
  return GradParams(state.params, *state.spec, sample.image, sample.label)
      .Norm();
}

std::vector<double> NormalizePerClass(std::span<const double> raw,
                                      std::span<const std::size_t> labels) {
  if (raw.size() != labels.size()) {
    throw ShapeError("normalization needs one label per score");
  }
  std::map<std::size_t, std::pair<double, double>> range;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto [it, fresh] = range.try_emplace(labels[i], raw[i], raw[i]);
    if (!fresh) {
      it->second.first = std::min(it->second.first, raw[i]);
      it->second.second = std::max(it->second.second, raw[i]);
    }
  }
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto [lo, hi] = range[labels[i]];
    out[i] = hi == lo ? 0.5 : (raw[i] - lo) / (hi - lo);
  }
  return out;
}

const std::vector<double>& ScoreTable::Raw(Metric m) const {
  auto it = raw.find(m);
  if (it == raw.end()) {
    throw ConfigError("score table has no '" + ToString(m) + "' column");
  }
  return it->second;
}

const std::vector<double>& ScoreTable::Normalized(Metric m) const {
  auto it = normalized.find(m);
  if (it == normalized.end()) {
    throw ConfigError("score table has no '" + ToString(m) + "' column");
  }
  return it->second;
}

void ScoreTable::Set(Metric m, std::vector<double> raw_scores) {
  if (raw_scores.size() != ids.size()) {
    throw ShapeError("score column has " + std::to_string(raw_scores.size()) +
                     " entries for " + std::to_string(ids.size()) + " samples");
  }
  for (double v : raw_scores) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite '" + ToString(m) + "' score");
    }
  }
  normalized[m] = NormalizePerClass(raw_scores, labels);
  raw[m] = std::move(raw_scores);
}

namespace {

std::string FormatDouble(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> SplitCsv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

void ScoreTable::WriteCsv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "sample_id,label,metric,raw,normalized\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (const auto& [m, column] : raw) {
      out << ids[i] << ',' << labels[i] << ',' << ToString(m) << ','
          << FormatDouble(column[i]) << ','
          << FormatDouble(normalized.at(m)[i]) << '\n';
    }
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

ScoreTable ScoreTable::ReadCsv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) ||
      line != "sample_id,label,metric,raw,normalized") {
    throw IoError("'" + path + "' is not a score table CSV");
  }
  ScoreTable t;
  std::map<SampleId, std::size_t> row_of;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f = SplitCsv(line);
    if (f.size() != 5) {
      throw IoError(path + ":" + std::to_string(line_no) +
                    ": expected 5 fields");
    }
    try {
      const SampleId id = std::stoull(f[0]);
      const std::size_t label = std::stoull(f[1]);
      const Metric m = MetricFromString(f[2]);
      auto [it, fresh] = row_of.try_emplace(id, t.ids.size());
      if (fresh) {
        t.ids.push_back(id);
        t.labels.push_back(label);
      }
      const std::size_t row = it->second;
      auto& raw_col = t.raw[m];
      auto& norm_col = t.normalized[m];
      raw_col.resize(t.ids.size());
      norm_col.resize(t.ids.size());
      raw_col[row] = std::stod(f[3]);
      norm_col[row] = std::stod(f[4]);
    } catch (const std::logic_error& e) {
      throw IoError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  for (auto& [m, col] : t.raw) {
    col.resize(t.ids.size());
    t.normalized[m].resize(t.ids.size());
  }
  return t;
}

ScoreTable ComputeScores(const ModelState& final_state,
                         const CheckpointStore& checkpoints,
                         const Dataset& dataset,
                         const ScoringOptions& options) {
  if (dataset.empty()) throw ConfigError("cannot score an empty dataset");
  ScoreTable table;
  for (const Sample& s : dataset.samples) {
    table.ids.push_back(s.id);
    table.labels.push_back(s.label);
  }
  auto wants = [&](Metric m) {
    return std::find(options.metrics.begin(), options.metrics.end(), m) !=
           options.metrics.end();
  };
  const std::size_t n = dataset.size();
  if (wants(Metric::kVog)) {
    if (checkpoints.size() < 2) {
      throw ConfigError("VoG needs at least 2 checkpoints, got " +
                        std::to_string(checkpoints.size()));
    }
    std::vector<double> vog(n);
    ParallelFor(n, [&](std::size_t i) {
      vog[i] = VogScalar(VogPixelwise(
          ComputeTrace(checkpoints, dataset.samples[i]), options.vog_literal));
    });
    table.Set(Metric::kVog, std::move(vog));
  }
  if (wants(Metric::kPlis)) {
    const double sigma = options.sigma.value_or(1.0);
    std::vector<double> plis(n);
    ParallelFor(n, [&](std::size_t i) {
      plis[i] = PlisScore(PlisMatrix(final_state, dataset.samples[i], sigma,
                                     options.nested_mode));
    });
    table.Set(Metric::kPlis, std::move(plis));
  }
  if (wants(Metric::kLoss) || wants(Metric::kGradnorm)) {
    std::vector<double> loss(n), gradnorm(n);
    ParallelFor(n, [&](std::size_t i) {
      const Sample& s = dataset.samples[i];
      SampleGradients g = ComputeSampleGradients(
          final_state.params, *final_state.spec, s.image, s.label, false);
      loss[i] = g.loss;
      gradnorm[i] = g.params.Norm();
    });
    if (wants(Metric::kLoss)) table.Set(Metric::kLoss, std::move(loss));
    if (wants(Metric::kGradnorm)) {
      table.Set(Metric::kGradnorm, std::move(gradnorm));
    }
  }
  return table;
}

}  // namespace fedval
