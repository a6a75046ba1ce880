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
#include "fedval/federation/federation.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <unordered_map>
#include <utility>

#include "fedval/util/errors.h"
#include "fedval/util/parallel.h"
#include "fedval/util/rng.h"

namespace fedval {
namespace {

constexpr int kMaxPartitionDraws = 100;

// Splits `total` into integer counts proportional to `shares` (which sum to
// 1), giving leftover units to the largest fractional parts.
std::vector<std::size_t> LargestRemainder(const std::vector<double>& shares,
                                          std::size_t total) {
  std::vector<std::size_t> counts(shares.size());
  std::vector<std::pair<double, std::size_t>> rema;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < shares.size(); ++i) {
    const double exact = shares[i] * static_cast<double>(total);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[i];
    rema.push_back({exact - std::floor(exact), i});
  }
  std::stable_sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
    return a.first > b.first;
  });
  for (std::size_t j = 0; assigned < total; ++j, ++assigned) {
    ++counts[rema[j % rema.size()].second];
  }
  return counts;
}

ClientPartition Finish(const Dataset& dataset, std::string strategy,
                       std::vector<std::vector<std::size_t>> positions) {
  ClientPartition p;
  p.strategy = std::move(strategy);
  for (auto& pos : positions) {
    std::sort(pos.begin(), pos.end());
    std::vector<SampleId> ids;
    for (std::size_t i : pos) ids.push_back(dataset.samples[i].id);
    p.ids.push_back(std::move(ids));
  }
  p.positions = std::move(positions);
  return p;
}

std::string FormatDouble(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string PartitionStrategy::ToString() const {
  if (kind == Kind::kIid) return "iid";
  char buf[48];
  std::snprintf(buf, sizeof(buf), "dirichlet(%g)", alpha);
  return buf;
}

ClientPartition PartitionDataset(const Dataset& dataset, std::size_t n_clients,
                                 const PartitionStrategy& strategy,
                                 std::uint64_t seed) {
  if (n_clients == 0) throw ConfigError("need at least one client");
  if (n_clients > dataset.size()) {
    throw ConfigError(std::to_string(n_clients) + " clients exceed the " +
                      std::to_string(dataset.size()) + " samples");
  }
  Rng rng = MakeRng(seed, "partition");
  if (strategy.kind == PartitionStrategy::Kind::kIid) {
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> positions(n_clients);
    const std::size_t base = dataset.size() / n_clients;
    const std::size_t extra = dataset.size() % n_clients;
    std::size_t next = 0;
    for (std::size_t c = 0; c < n_clients; ++c) {
      const std::size_t size = base + (c < extra ? 1 : 0);
      positions[c].assign(order.begin() + next, order.begin() + next + size);
      next += size;
    }
    return Finish(dataset, strategy.ToString(), std::move(positions));
  }
  if (!(strategy.alpha > 0.0)) {
    throw ConfigError("Dirichlet concentration must be positive");
  }
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    by_class[dataset.samples[i].label].push_back(i);
  }
  std::gamma_distribution<double> gamma(strategy.alpha, 1.0);
  for (int attempt = 0; attempt < kMaxPartitionDraws; ++attempt) {
    std::vector<std::vector<std::size_t>> positions(n_clients);
    for (auto& [label, members] : by_class) {
      std::vector<double> shares(n_clients);
      double total = 0.0;
      for (double& s : shares) {
        s = gamma(rng);
        total += s;
      }
      if (total <= 0.0) {
        // Every draw underflowed (tiny alpha): give the class to one client.
        std::fill(shares.begin(), shares.end(), 0.0);
        shares[rng() % n_clients] = 1.0;
        total = 1.0;
      }
      for (double& s : shares) s /= total;
      std::vector<std::size_t> shuffled = members;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      std::vector<std::size_t> counts =
          LargestRemainder(shares, shuffled.size());
      std::size_t next = 0;
      for (std::size_t c = 0; c < n_clients; ++c) {
        positions[c].insert(positions[c].end(), shuffled.begin() + next,
                            shuffled.begin() + next + counts[c]);
        next += counts[c];
      }
    }
    const bool all_nonempty =
        std::none_of(positions.begin(), positions.end(),
                     [](const auto& p) { return p.empty(); });
    if (all_nonempty) {
      return Finish(dataset, strategy.ToString(), std::move(positions));
    }
  }
  throw ConfigError("Dirichlet partition left a client empty after " +
                    std::to_string(kMaxPartitionDraws) + " draws");
}

ModelState FedAvgAggregate(std::span<const ModelState> states,
                           std::span<const double> weights) {
  if (states.empty()) throw ConfigError("FedAvg needs at least one client");
  if (states.size() != weights.size()) {
    throw ConfigError("FedAvg needs one weight per client");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ConfigError("FedAvg weights must be finite and nonnegative");
    }
    total += w;
  }
  if (total <= 0.0) throw ConfigError("FedAvg weights are all zero");
  for (const ModelState& s : states) {
    if (!(*s.spec == *states[0].spec)) {
      throw ConfigError("FedAvg clients have different model specs");
    }
  }
  ModelState out = states[0];
  for (double& v : out.params.mutable_data()) v = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (weights[i] == 0.0) continue;
    out.params.Axpy(weights[i] / total, states[i].params);
  }
  return out;
}

FederatedResult FederatedTrain(const ModelState& initial,
                               const Dataset& dataset,
                               const ClientPartition& partition,
                               const FederatedConfig& config,
                               std::uint64_t seed) {
  const std::size_t n = partition.num_clients();
  if (n == 0) throw ConfigError("federation needs at least one client");
  std::vector<Dataset> local(n);
  std::vector<double> weights(n);
  for (std::size_t c = 0; c < n; ++c) {
    if (partition.positions[c].empty()) {
      throw ConfigError("client " + std::to_string(c) + " holds no samples");
    }
    local[c] = dataset.Select(partition.positions[c]);
    for (Sample& s : local[c].samples) s.client = static_cast<uint32_t>(c);
    weights[c] = static_cast<double>(local[c].size());
  }
  TrainConfig client_cfg = config.local;
  client_cfg.epochs = config.rounds * config.local_epochs;
  const std::uint64_t local_steps =
      config.local_epochs * client_cfg.StepsPerEpoch();

  std::vector<std::unique_ptr<Trainer>> trainers;
  for (std::size_t c = 0; c < n; ++c) {
    const std::uint64_t client_seed =
        c == 0 ? seed : DeriveSeed(seed, "client/" + std::to_string(c));
    trainers.push_back(
        std::make_unique<Trainer>(initial, local[c], client_cfg, client_seed));
  }

  FederatedResult result;
  result.global = initial;
  result.checkpoints = CheckpointStore(config.local.checkpoints);
  const std::vector<std::uint64_t> schedule =
      CheckpointSchedule(config.rounds, config.local.checkpoints);
  std::size_t next = 0;
  auto capture = [&](std::uint64_t round) {
    while (next < schedule.size() && schedule[next] == round) {
      result.checkpoints.Add(round, result.global);
      ++next;
    }
  };
  capture(0);
  std::vector<ModelState> states(n);
  for (std::size_t r = 0; r < config.rounds; ++r) {
    ParallelFor(n, [&](std::size_t c) {
      trainers[c]->set_params(result.global.params);
      trainers[c]->RunSteps(local_steps);
      states[c] = trainers[c]->state();
    });
    result.global = FedAvgAggregate(states, weights);
    capture(r + 1);
  }
  for (const auto& t : trainers) {
    result.client_accountants.push_back(t->accountant());
    result.client_privacy.push_back(t->privacy());
    result.warnings.insert(result.warnings.end(), t->warnings().begin(),
                           t->warnings().end());
  }
  return result;
}

std::vector<ClientReport> AllocateRewards(const ReleasedScores& released,
                                          const ClientPartition& partition,
                                          double pool) {
  if (!(pool >= 0.0) || !std::isfinite(pool)) {
    throw ConfigError("reward pool must be finite and nonnegative");
  }
  std::unordered_map<SampleId, double> value_of;
  for (std::size_t i = 0; i < released.size(); ++i) {
    value_of[released.ids[i]] = released.values[i];
  }
  std::vector<ClientReport> reports(partition.num_clients());
  double total = 0.0;
  for (std::size_t c = 0; c < reports.size(); ++c) {
    ClientReport& r = reports[c];
    r.client_id = c;
    r.n_samples = partition.ids[c].size();
    r.metric = ToString(released.metric);
    for (SampleId id : partition.ids[c]) {
      auto it = value_of.find(id);
      if (it == value_of.end()) {
        throw ConfigError("released scores do not cover sample " +
                          std::to_string(id));
      }
      r.score_sum_released += it->second;
    }
    r.epsilon_spent = released.epsilon_per_value * static_cast<double>(r.n_samples);
    total += std::max(0.0, r.score_sum_released);
  }
  for (ClientReport& r : reports) {
    r.reward = total > 0.0
                   ? pool * std::max(0.0, r.score_sum_released) / total
                   : pool / static_cast<double>(reports.size());
  }
  return reports;
}

void WriteClientReportsCsv(std::span<const ClientReport> reports,
                           const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "client_id,n_samples,metric,score_sum_released,reward,"
         "epsilon_spent\n";
  for (const ClientReport& r : reports) {
    out << r.client_id << ',' << r.n_samples << ',' << r.metric << ','
        << FormatDouble(r.score_sum_released) << ',' << FormatDouble(r.reward)
        << ',' << FormatDouble(r.epsilon_spent) << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace fedval
