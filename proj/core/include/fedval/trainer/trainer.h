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
#ifndef FEDVAL_TRAINER_TRAINER_H_
#define FEDVAL_TRAINER_TRAINER_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedval/models/dataset.h"
#include "fedval/models/model.h"
#include "fedval/trainer/accountant.h"
#include "fedval/util/rng.h"

namespace fedval {

struct PrivacyParams {
  // At most one of epsilon and noise_multiplier may be unset. When sigma is
  // unset it is calibrated so that the whole run meets epsilon at delta.
  std::optional<double> epsilon;
  double delta = 1e-5;
  double clip_norm = 1.0;
  std::optional<double> noise_multiplier;
  // Filled in by the trainer from the training config.
  double sample_rate = 1.0;
  std::uint64_t steps = 1;

  // Throws ConfigError on invalid values. Returns human-readable warnings,
  // e.g. delta >= 1/dataset_size.
  std::vector<std::string> Validate(std::size_t dataset_size) const;
};

// grad * min(1, clip_norm / |grad|).
ParamVector ClipPerSample(const ParamVector& grad, double clip_norm);

// Positions (into the dataset) of a Poisson sample with rate q.
std::vector<std::size_t> PoissonSample(std::size_t n, double q, Rng& rng);

// One DP-SGD update on a batch of dataset positions:
//   theta -= lr * (sum_i clip(g_i) + N(0, sigma^2 C^2 I)) / (q n).
// With privacy unset the gradients are neither clipped nor noised. Appends
// one ledger entry when private. Returns the mean batch loss (0 for an empty
// batch).
double DpSgdStep(ModelState& state, const Dataset& dataset,
                 const std::vector<std::size_t>& batch, double sample_rate,
                 double lr, const std::optional<PrivacyParams>& privacy,
                 Rng& noise_rng, AccountantState* accountant);

struct Checkpoint {
  // Ordinal within the store, 0..K-1.
  std::size_t index = 0;
  // Number of optimizer steps taken when the snapshot was captured.
  std::uint64_t step = 0;
  ModelState state;
};

class CheckpointStore {
 public:
  CheckpointStore() = default;
  explicit CheckpointStore(std::size_t capacity) : capacity_(capacity) {}

  // Appends a snapshot; throws if full.
  void Add(std::uint64_t step, const ModelState& state);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return checkpoints_.size(); }
  const Checkpoint& operator[](std::size_t i) const { return checkpoints_[i]; }
  const std::vector<Checkpoint>& checkpoints() const { return checkpoints_; }

 private:
  std::size_t capacity_ = 0;
  std::vector<Checkpoint> checkpoints_;
};

// Steps after which each of K evenly spaced snapshots is taken; the last is
// always total_steps. Nondecreasing; repeats when total_steps < K.
std::vector<std::uint64_t> CheckpointSchedule(std::uint64_t total_steps,
                                              std::size_t k);

struct TrainConfig {
  std::size_t epochs = 1;
  double lr = 0.1;
  // Poisson sampling rate q; one epoch is round(1/q) steps.
  double sample_rate = 0.01;
  std::optional<PrivacyParams> privacy;
  // Number of snapshots; 0 disables capture.
  std::size_t checkpoints = 10;

  std::uint64_t StepsPerEpoch() const;
  std::uint64_t TotalSteps() const { return epochs * StepsPerEpoch(); }
};

struct TrainResult {
  ModelState state;
  CheckpointStore checkpoints;
  AccountantState accountant;
  // Resolved privacy parameters (sigma calibrated), if private.
  std::optional<PrivacyParams> privacy;
  std::vector<double> epoch_losses;
  std::vector<std::string> warnings;
};

// Resumable DP-SGD loop over one dataset. Sampling and noise draw from two
// independent streams derived from `seed`; the model was initialised from a
// third.
class Trainer {
 public:
  // Resolves privacy (calibrating sigma over config.TotalSteps() if unset).
  Trainer(ModelState initial, const Dataset& dataset, TrainConfig config,
          std::uint64_t seed);
  // Uses already-resolved privacy parameters, e.g. calibrated over a longer
  // multi-phase schedule.
  Trainer(ModelState initial, const Dataset& dataset, TrainConfig config,
          std::uint64_t seed, std::optional<PrivacyParams> resolved_privacy);

  // Runs one optimizer step and returns the mean batch loss.
  double Step();
  void RunSteps(std::uint64_t n);

  const ModelState& state() const { return state_; }
  void set_params(const ParamVector& params) { state_.params = params; }
  std::uint64_t steps_done() const { return steps_done_; }
  const AccountantState& accountant() const { return accountant_; }
  const std::optional<PrivacyParams>& privacy() const { return privacy_; }
  const TrainConfig& config() const { return config_; }
  const Dataset& dataset() const { return *dataset_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  ModelState state_;
  const Dataset* dataset_;
  TrainConfig config_;
  std::optional<PrivacyParams> privacy_;
  Rng sampling_rng_;
  Rng noise_rng_;
  AccountantState accountant_;
  std::uint64_t steps_done_ = 0;
  std::vector<std::string> warnings_;
};

// Validates `params` and calibrates sigma over `schedule` if unset. The
// returned params carry the first phase's sample rate, the schedule's total
// step count and a noise multiplier. Warnings are appended to `warnings`.
PrivacyParams ResolvePrivacy(PrivacyParams params, std::size_t dataset_size,
                             std::span<const SchedulePhase> schedule,
                             std::vector<std::string>* warnings = nullptr);

// Trains from `initial` for config.epochs and captures config.checkpoints
// evenly spaced snapshots.
TrainResult Train(const ModelState& initial, const Dataset& dataset,
                  const TrainConfig& config, std::uint64_t seed);

}  // namespace fedval

#endif  // FEDVAL_TRAINER_TRAINER_H_
