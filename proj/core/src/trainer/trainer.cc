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
#include "fedval/trainer/trainer.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <utility>

#include "fedval/autodiff/gradients.h"
#include "fedval/util/errors.h"
#include "fedval/util/parallel.h"

namespace fedval {
namespace {

// Per-sample gradients are materialized this many at a time and summed in
// batch order, which keeps the sum independent of the worker count.
constexpr std::size_t kGradChunk = 64;

}  // namespace

std::vector<std::string> PrivacyParams::Validate(
    std::size_t dataset_size) const {
  if (!epsilon && !noise_multiplier) {
    throw ConfigError("privacy needs epsilon or a noise multiplier");
  }
  if (epsilon && !(*epsilon > 0.0)) {
    throw ConfigError("epsilon must be positive");
  }
  if (noise_multiplier && !(*noise_multiplier >= 0.0)) {
    throw ConfigError("noise multiplier must be nonnegative");
  }
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ConfigError("delta must lie in (0, 1)");
  }
  if (!(clip_norm > 0.0)) throw ConfigError("clip norm must be positive");
  if (!(sample_rate > 0.0 && sample_rate <= 1.0)) {
    throw ConfigError("sample rate must lie in (0, 1]");
  }
  if (steps < 1) throw ConfigError("privacy steps must be at least 1");
  std::vector<std::string> warnings;
  if (dataset_size > 0 && delta >= 1.0 / static_cast<double>(dataset_size)) {
    warnings.push_back("delta " + std::to_string(delta) +
                       " is not below 1/n for n = " +
                       std::to_string(dataset_size));
  }
  return warnings;
}

ParamVector ClipPerSample(const ParamVector& grad, double clip_norm) {
  if (!(clip_norm > 0.0)) throw ConfigError("clip norm must be positive");
  ParamVector out = grad;
  const double norm = grad.Norm();
  if (norm > clip_norm) out *= clip_norm / norm;
  return out;
}

std::vector<std::size_t> PoissonSample(std::size_t n, double q, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::size_t> batch;
  for (std::size_t i = 0; i < n; ++i) {
    if (u(rng) < q) batch.push_back(i);
  }
  return batch;
}

double DpSgdStep(ModelState& state, const Dataset& dataset,
                 const std::vector<std::size_t>& batch, double sample_rate,
                 double lr, const std::optional<PrivacyParams>& privacy,
                 Rng& noise_rng, AccountantState* accountant) {
  if (dataset.empty()) throw ConfigError("cannot train on an empty dataset");
  if (privacy && !privacy->noise_multiplier) {
    throw ConfigError("DP-SGD step needs a resolved noise multiplier");
  }
  const ModelSpec& spec = *state.spec;
  ParamVector sum = ParamVector::Zeros(state.params.layout_ptr());
  double loss_sum = 0.0;
  std::vector<ParamVector> grads;
  std::vector<double> losses;
  for (std::size_t begin = 0; begin < batch.size(); begin += kGradChunk) {
    const std::size_t end = std::min(batch.size(), begin + kGradChunk);
    grads.assign(end - begin, ParamVector());
    losses.assign(end - begin, 0.0);
    ParallelFor(end - begin, [&](std::size_t i) {
      const Sample& s = dataset.samples[batch[begin + i]];
      SampleGradients g =
          ComputeSampleGradients(state.params, spec, s.image, s.label, false);
      losses[i] = g.loss;
      grads[i] = privacy ? ClipPerSample(g.params, privacy->clip_norm)
                         : std::move(g.params);
    });
    for (std::size_t i = 0; i < grads.size(); ++i) {
      sum += grads[i];
      loss_sum += losses[i];
    }
  }
  if (privacy) {
    const double stddev = *privacy->noise_multiplier * privacy->clip_norm;
    if (stddev > 0.0) {
      std::normal_distribution<double> normal(0.0, 1.0);
      for (double& v : sum.mutable_data()) v += stddev * normal(noise_rng);
    }
  }
  const double denom = sample_rate * static_cast<double>(dataset.size());
  state.params.Axpy(-lr / denom, sum);
  for (double v : state.params.data()) {
    if (!std::isfinite(v)) {
      throw NumericError("parameters became non-finite after a DP-SGD step");
    }
  }
  if (privacy && accountant) {
    accountant->Record(sample_rate, *privacy->noise_multiplier, 1);
  }
  return batch.empty() ? 0.0 : loss_sum / static_cast<double>(batch.size());
}

void CheckpointStore::Add(std::uint64_t step, const ModelState& state) {
  if (checkpoints_.size() >= capacity_) {
    throw ConfigError("checkpoint store is full (capacity " +
                      std::to_string(capacity_) + ")");
  }
  if (!checkpoints_.empty() && step < checkpoints_.back().step) {
    throw ConfigError("checkpoint steps must not decrease");
  }
  checkpoints_.push_back({checkpoints_.size(), step, state});
}

std::vector<std::uint64_t> CheckpointSchedule(std::uint64_t total_steps,
                                              std::size_t k) {
  std::vector<std::uint64_t> steps;
  for (std::size_t i = 1; i <= k; ++i) {
    // ceil(i * T / K): the last is exactly T.
    steps.push_back((i * total_steps + k - 1) / k);
  }
  return steps;
}

std::uint64_t TrainConfig::StepsPerEpoch() const {
  if (!(sample_rate > 0.0 && sample_rate <= 1.0)) {
    throw ConfigError("sample rate must lie in (0, 1]");
  }
  return std::max<std::uint64_t>(
      1, static_cast<std::uint64_t>(std::llround(1.0 / sample_rate)));
}

PrivacyParams ResolvePrivacy(PrivacyParams params, std::size_t dataset_size,
                             std::span<const SchedulePhase> schedule,
                             std::vector<std::string>* warnings) {
  if (schedule.empty()) throw ConfigError("empty training schedule");
  params.sample_rate = schedule.front().sample_rate;
  params.steps = 0;
  for (const SchedulePhase& p : schedule) params.steps += p.steps;
  params.steps = std::max<std::uint64_t>(params.steps, 1);
  std::vector<std::string> w = params.Validate(dataset_size);
  if (warnings) warnings->insert(warnings->end(), w.begin(), w.end());
  if (!params.noise_multiplier) {
    params.noise_multiplier =
        CalibrateSigma(*params.epsilon, params.delta, schedule);
  }
  return params;
}

Trainer::Trainer(ModelState initial, const Dataset& dataset, TrainConfig config,
                 std::uint64_t seed)
    : Trainer(std::move(initial), dataset, config, seed, std::nullopt) {
  if (config_.privacy) {
    const SchedulePhase phase{config_.sample_rate,
                              std::max<std::uint64_t>(1, config_.TotalSteps())};
    privacy_ = ResolvePrivacy(*config_.privacy, dataset.size(),
                              std::span<const SchedulePhase>(&phase, 1),
                              &warnings_);
  }
}

Trainer::Trainer(ModelState initial, const Dataset& dataset, TrainConfig config,
                 std::uint64_t seed,
                 std::optional<PrivacyParams> resolved_privacy)
    : state_(std::move(initial)),
      dataset_(&dataset),
      config_(std::move(config)),
      privacy_(std::move(resolved_privacy)),
      sampling_rng_(MakeRng(seed, "sampling")),
      noise_rng_(MakeRng(seed, "noise")) {
  if (!(config_.lr > 0.0)) throw ConfigError("learning rate must be positive");
  config_.StepsPerEpoch();
  if (dataset.empty()) throw ConfigError("cannot train on an empty dataset");
  if (privacy_ && !privacy_->noise_multiplier) {
    throw ConfigError("resolved privacy parameters lack a noise multiplier");
  }
}

double Trainer::Step() {
  std::vector<std::size_t> batch =
      PoissonSample(dataset_->size(), config_.sample_rate, sampling_rng_);
  const double loss =
      DpSgdStep(state_, *dataset_, batch, config_.sample_rate, config_.lr,
                privacy_, noise_rng_, &accountant_);
  ++steps_done_;
  return loss;
}

void Trainer::RunSteps(std::uint64_t n) {
  for (std::uint64_t i = 0; i < n; ++i) Step();
}

TrainResult Train(const ModelState& initial, const Dataset& dataset,
                  const TrainConfig& config, std::uint64_t seed) {
  Trainer trainer(initial, dataset, config, seed);
  const std::uint64_t total = config.TotalSteps();
  const std::uint64_t per_epoch = config.StepsPerEpoch();
  CheckpointStore store(config.checkpoints);
  std::vector<std::uint64_t> schedule =
      CheckpointSchedule(total, config.checkpoints);
  std::size_t next = 0;
  auto capture = [&] {
    while (next < schedule.size() && schedule[next] == trainer.steps_done()) {
      store.Add(trainer.steps_done(), trainer.state());
      ++next;
    }
  };
  TrainResult result;
  capture();
  double epoch_loss = 0.0;
  for (std::uint64_t t = 0; t < total; ++t) {
    epoch_loss += trainer.Step();
    capture();
    if ((t + 1) % per_epoch == 0) {
      result.epoch_losses.push_back(epoch_loss / static_cast<double>(per_epoch));
      epoch_loss = 0.0;
    }
  }
  result.state = trainer.state();
  result.checkpoints = std::move(store);
  result.accountant = trainer.accountant();
  result.privacy = trainer.privacy();
  result.warnings = trainer.warnings();
  return result;
}

}  // namespace fedval
