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
#ifndef FEDVAL_PIPELINE_CONFIG_H_
#define FEDVAL_PIPELINE_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedval/consistency/consistency.h"
#include "fedval/models/dataset.h"
#include "fedval/pipeline/data.h"
#include "fedval/valuation/scores.h"

namespace fedval {

struct DatasetConfig {
  enum class Source { kIdx, kCifarBin, kSynthetic };
  Source source = Source::kSynthetic;
  std::string images;  // idx
  std::string labels;  // idx
  std::string path;    // cifar-bin
  SynthSpec synthetic;
  // Seed of the synthetic generator; the experiment seed when unset.
  std::optional<std::uint64_t> synthetic_seed;
  std::optional<std::size_t> subset;
  double test_fraction = 0.2;
};

// Training privacy: unset means non-private SGD.
struct PrivacyConfig {
  std::optional<double> epsilon;
  std::optional<double> sigma;
  double delta = 1e-5;
  double clip_norm = 1.0;
};

struct TrainSection {
  std::size_t epochs = 5;
  double lr = 0.1;
  double sample_rate = 0.01;
  std::size_t checkpoints = 10;
  std::optional<PrivacyConfig> privacy;
};

struct PruneSection {
  double fraction = 0.25;
  std::size_t warmup_epochs = 5;
  std::size_t retrain_epochs = 15;
  // Metrics used for removal; the top-level metric list when empty.
  std::vector<Metric> metrics;
  bool random_control = true;
  // Removal of ground-truth atypical samples (synthetic data only).
  bool atypical_control = true;
};

struct ReleaseSection {
  double epsilon = 1.0;  // per released value
  double clip_bound = 1.0;
  std::optional<double> budget_cap;
  std::vector<Metric> metrics = {Metric::kVog};
  std::optional<double> variance_epsilon;
};

struct FederationSection {
  std::size_t clients = 4;
  std::string strategy = "iid";
  double alpha = 0.5;
  std::size_t rounds = 5;
  std::size_t local_epochs = 1;
  double reward_pool = 100.0;
};

struct CompareSetting {
  std::string name;
  // Training privacy for this setting; non-private when unset.
  std::optional<PrivacyConfig> privacy;
  // Sampling and noise seed of this setting's training run. Derived from the
  // experiment seed and the name when unset.
  std::optional<std::uint64_t> seed;
};

struct CompareSection {
  std::vector<CompareSetting> settings;
  std::size_t k = 25;
  Pairing pairing = Pairing::kRankAligned;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  nlohmann::json model = {{"arch", "cnn"}};
  TrainSection train;
  std::vector<Metric> metrics = {kAllMetrics.begin(), kAllMetrics.end()};
  bool vog_literal = false;
  PruneSection prune;
  ReleaseSection release;
  FederationSection federation;
  CompareSection compare;

  // Strict parse: unknown keys, wrong types and out-of-range values throw
  // ConfigError. Referenced files must exist.
  static ExperimentConfig FromJson(const nlohmann::json& j);
  static ExperimentConfig Load(const std::string& path);
  // Every field with defaults filled in; FromJson(ToJson()) reproduces it.
  nlohmann::json ToJson() const;
  void Validate() const;
  // FNV-1a 64 of the canonical ToJson() dump, as 16 hex digits.
  std::string Hash() const;

  // Model spec with input shape and class count taken from the data.
  ModelSpec ResolveModel(const Dataset& dataset) const;
};

PrivacyConfig ParsePrivacy(const nlohmann::json& j, const std::string& context);
nlohmann::json PrivacyToJson(const std::optional<PrivacyConfig>& p);

}  // namespace fedval

#endif  // FEDVAL_PIPELINE_CONFIG_H_
