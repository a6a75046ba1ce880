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
#ifndef FEDVAL_FEDERATION_FEDERATION_H_
#define FEDVAL_FEDERATION_FEDERATION_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedval/models/dataset.h"
#include "fedval/models/model.h"
#include "fedval/release/release.h"
#include "fedval/trainer/accountant.h"
#include "fedval/trainer/trainer.h"

// Simulated FedAvg federation with reward allocation from released scores.
namespace fedval {

struct PartitionStrategy {
  enum class Kind { kIid, kDirichlet };
  Kind kind = Kind::kIid;
  // Concentration of the per-class client proportions (Dirichlet only).
  double alpha = 0.5;

  static PartitionStrategy Iid() { return {Kind::kIid, 0.0}; }
  static PartitionStrategy Dirichlet(double alpha) {
    return {Kind::kDirichlet, alpha};
  }
  // "iid" or "dirichlet(<alpha>)".
  std::string ToString() const;
};

// Every dataset position belongs to exactly one nonempty client.
struct ClientPartition {
  std::string strategy;
  // Positions into the dataset, ascending, per client.
  std::vector<std::vector<std::size_t>> positions;
  // The same samples by id.
  std::vector<std::vector<SampleId>> ids;

  std::size_t num_clients() const { return positions.size(); }
};

// iid: a seeded shuffle split into sizes differing by at most one.
// Dirichlet: per class, client shares ~ Dir(alpha 1) turned into exact
// counts by largest remainder. Redraws up to 100 times while some client is
// empty, then throws ConfigError.
ClientPartition PartitionDataset(const Dataset& dataset, std::size_t n_clients,
                                 const PartitionStrategy& strategy,
                                 std::uint64_t seed);

// Parameter-wise mean with weights normalized to sum 1. Throws ConfigError
// on mismatched specs, negative weights or all-zero weights.
ModelState FedAvgAggregate(std::span<const ModelState> states,
                           std::span<const double> weights);

struct FederatedConfig {
  std::size_t rounds = 1;
  std::size_t local_epochs = 1;
  // Per-client optimizer settings; `epochs` is ignored and `checkpoints`
  // counts global snapshots.
  TrainConfig local;
};

struct FederatedResult {
  ModelState global;
  // Snapshots of the global model at evenly spaced round boundaries.
  CheckpointStore checkpoints;
  std::vector<AccountantState> client_accountants;
  std::vector<std::optional<PrivacyParams>> client_privacy;
  std::vector<std::string> warnings;
};

// Per round every client resumes its own trainer from the global model for
// local_epochs, then the global model becomes the sample-count weighted
// FedAvg of the clients. Client 0 draws from the streams of `seed`, so a
// one-client federation reproduces centralized training.
FederatedResult FederatedTrain(const ModelState& initial,
                               const Dataset& dataset,
                               const ClientPartition& partition,
                               const FederatedConfig& config,
                               std::uint64_t seed);

struct ClientReport {
  std::size_t client_id = 0;
  std::size_t n_samples = 0;
  std::string metric;
  double score_sum_released = 0.0;
  double reward = 0.0;
  double epsilon_spent = 0.0;
};

// Proportional rewards: client share = max(0, sum of its released scores)
// over the total of those, or an equal split when the total is 0. Only
// released scores are accepted.
std::vector<ClientReport> AllocateRewards(const ReleasedScores& released,
                                          const ClientPartition& partition,
                                          double pool);

// CSV with header client_id,n_samples,metric,score_sum_released,reward,
// epsilon_spent.
void WriteClientReportsCsv(std::span<const ClientReport> reports,
                           const std::string& path);

}  // namespace fedval

#endif  // FEDVAL_FEDERATION_FEDERATION_H_
