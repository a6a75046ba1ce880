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
#ifndef FEDVAL_PIPELINE_PIPELINE_H_
#define FEDVAL_PIPELINE_PIPELINE_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "fedval/models/dataset.h"
#include "fedval/pipeline/config.h"
#include "fedval/pipeline/report.h"
#include "fedval/util/errors.h"
#include "fedval/valuation/scores.h"

namespace fedval {

// A non-config failure inside a named pipeline stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "': " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct RunOptions {
  // Side files (checkpoints, CSV tables) go here; nothing is written when
  // empty.
  std::string out_dir;
  // Every stage after release reads released values only.
  bool released_only = false;
  // Adds training + release epsilon (basic composition) to the report.
  bool compose_with_training = false;
  // Test hook, called with each raw score table right after its release.
  std::function<void(ScoreTable&)> after_release;
};

struct RunOutput {
  Report report;
  // Wall-clock seconds per stage. Kept out of the report so that reports
  // stay byte-identical across runs.
  nlohmann::json timings = nlohmann::json::object();
};

// Command-line overrides layered on a loaded config.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> epsilon;
  std::optional<Metric> metric;
  bool vog_literal = false;
};
// --epsilon sets the training target for train, score, prune-retrain and
// federate, and the per-value release epsilon for release. --metric narrows
// the metric set of the command. Throws ConfigError where a flag does not
// apply.
ExperimentConfig ApplyOverrides(ExperimentConfig config,
                                const std::string& command,
                                const Overrides& overrides);

struct ExperimentData {
  Dataset train;
  Dataset test;
};
// Loads the configured source, takes the seeded subset and the held-out
// split. The split is fixed by the seed before any pruning.
ExperimentData LoadExperimentData(const ExperimentConfig& config);

RunOutput RunTrain(const ExperimentConfig& config, const RunOptions& options);
RunOutput RunScore(const ExperimentConfig& config, const RunOptions& options);
RunOutput RunRelease(const ExperimentConfig& config, const RunOptions& options);
RunOutput RunPruneRetrain(const ExperimentConfig& config,
                          const RunOptions& options);
RunOutput RunFederate(const ExperimentConfig& config,
                      const RunOptions& options);
RunOutput RunCompare(const ExperimentConfig& config, const RunOptions& options);

// Dispatch by subcommand name; throws ConfigError for an unknown one.
RunOutput RunCommand(const std::string& command,
                     const ExperimentConfig& config, const RunOptions& options);

}  // namespace fedval

#endif  // FEDVAL_PIPELINE_PIPELINE_H_
