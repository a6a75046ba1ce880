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
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <type_traits>
#include <vector>

#include <gtest/gtest.h>

#include "fedval/federation/federation.h"
#include "fedval/util/errors.h"
#include "fedval/util/parallel.h"
#include "test_util.h"

namespace fedval {
namespace {

using ::fedval::testing::RandomTensor;

// Rewards accept released scores only; raw score tables do not convert.
static_assert(!std::is_invocable_v<decltype(&AllocateRewards),
                                   const ScoreTable&, const ClientPartition&,
                                   double>);
static_assert(std::is_invocable_v<decltype(&AllocateRewards),
                                  const ReleasedScores&,
                                  const ClientPartition&, double>);

Dataset Labeled(std::size_t n, std::size_t classes, std::uint64_t seed,
                Shape shape = {1, 2, 2}) {
  std::mt19937_64 rng(seed);
  Dataset d;
  d.input_shape = shape;
  d.num_classes = classes;
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.id = 500 + 3 * i;
    s.label = i % classes;
    s.image = RandomTensor(shape, rng, 0, 1);
    d.samples.push_back(std::move(s));
  }
  return d;
}

void ExpectExact(const ClientPartition& p, const Dataset& d) {
  std::multiset<SampleId> seen;
  for (std::size_t c = 0; c < p.num_clients(); ++c) {
    EXPECT_FALSE(p.positions[c].empty());
    ASSERT_EQ(p.positions[c].size(), p.ids[c].size());
    for (std::size_t j = 0; j < p.positions[c].size(); ++j) {
      EXPECT_EQ(d.samples[p.positions[c][j]].id, p.ids[c][j]);
      seen.insert(p.ids[c][j]);
    }
  }
  ASSERT_EQ(seen.size(), d.size());
  for (const Sample& s : d.samples) EXPECT_EQ(seen.count(s.id), 1u);
}

TEST(PartitionTest, SingleClientGetsEverything) {
  Dataset d = Labeled(37, 3, 1);
  ClientPartition p = PartitionDataset(d, 1, PartitionStrategy::Iid(), 4);
  ASSERT_EQ(p.num_clients(), 1u);
  EXPECT_EQ(p.positions[0].size(), 37u);
  ClientPartition q =
      PartitionDataset(d, 1, PartitionStrategy::Dirichlet(0.5), 4);
  EXPECT_EQ(q.positions[0].size(), 37u);
}

TEST(PartitionTest, IidIsBalanced) {
  Dataset d = Labeled(1000, 10, 1);
  ClientPartition p = PartitionDataset(d, 10, PartitionStrategy::Iid(), 2);
  for (const auto& c : p.positions) EXPECT_EQ(c.size(), 100u);
  EXPECT_EQ(p.strategy, "iid");
  ClientPartition q = PartitionDataset(Labeled(1003, 10, 1), 10,
                                       PartitionStrategy::Iid(), 2);
  for (const auto& c : q.positions) {
    EXPECT_GE(c.size(), 100u);
    EXPECT_LE(c.size(), 101u);
  }
}

TEST(PartitionTest, ExactForEveryStrategyAndSeed) {
  Dataset d = Labeled(300, 5, 3);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (auto s : {PartitionStrategy::Iid(), PartitionStrategy::Dirichlet(0.3),
                   PartitionStrategy::Dirichlet(5.0)}) {
      ExpectExact(PartitionDataset(d, 6, s, seed), d);
    }
  }
}

TEST(PartitionTest, DeterministicPerSeed) {
  Dataset d = Labeled(200, 4, 3);
  auto s = PartitionStrategy::Dirichlet(0.5);
  EXPECT_EQ(PartitionDataset(d, 5, s, 8).positions,
            PartitionDataset(d, 5, s, 8).positions);
  EXPECT_NE(PartitionDataset(d, 5, s, 8).positions,
            PartitionDataset(d, 5, s, 9).positions);
}

// Mean over clients of the chi-square distance between a client's label
// distribution and the global one.
double LabelSkew(const ClientPartition& p, const Dataset& d) {
  const std::size_t k = d.num_classes;
  std::vector<double> global(k, 0.0);
  for (const Sample& s : d.samples) global[s.label] += 1.0 / d.size();
  double total = 0.0;
  for (const auto& pos : p.positions) {
    std::vector<double> local(k, 0.0);
    for (std::size_t i : pos) local[d.samples[i].label] += 1.0 / pos.size();
    for (std::size_t c = 0; c < k; ++c) {
      total += (local[c] - global[c]) * (local[c] - global[c]) / global[c];
    }
  }
  return total / p.num_clients();
}

TEST(PartitionTest, DirichletConcentrationControlsLabelSkew) {
  Dataset d = Labeled(2000, 10, 5);
  std::vector<double> skew;
  for (double alpha : {0.1, 1.0, 100.0}) {
    double sum = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      sum += LabelSkew(
          PartitionDataset(d, 10, PartitionStrategy::Dirichlet(alpha), seed),
          d);
    }
    skew.push_back(sum / 20);
  }
  EXPECT_GT(skew[0], skew[1]);
  EXPECT_GT(skew[1], skew[2]);
  EXPECT_LT(skew[2], 0.02);
  EXPECT_GT(skew[0], 1.0);
}

TEST(PartitionTest, ErrorsOnImpossibleRequests) {
  Dataset d = Labeled(3, 1, 1);
  EXPECT_THROW(PartitionDataset(d, 4, PartitionStrategy::Iid(), 1),
               ConfigError);
  EXPECT_THROW(PartitionDataset(d, 0, PartitionStrategy::Iid(), 1),
               ConfigError);
  EXPECT_THROW(PartitionDataset(d, 3, PartitionStrategy::Dirichlet(1e-3), 1),
               ConfigError);
  EXPECT_THROW(PartitionDataset(d, 2, PartitionStrategy::Dirichlet(0.0), 1),
               ConfigError);
}

ModelState StateWith(const ModelSpec& spec, double value) {
  ModelState s = InitModel(spec, 1);
  for (double& v : s.params.mutable_data()) v = value;
  return s;
}

TEST(FedAvgTest, Examples) {
  ModelSpec spec = ModelSpec::Mlp({1, 1, 1}, {}, 2);
  std::vector<ModelState> s = {StateWith(spec, 1), StateWith(spec, 3)};
  std::vector<double> eq = {1, 1};
  ModelState avg = FedAvgAggregate(s, eq);
  for (double v : avg.params.data()) EXPECT_EQ(v, 2.0);
  std::vector<ModelState> t = {StateWith(spec, 0), StateWith(spec, 4)};
  std::vector<double> w = {1, 3};
  ModelState weighted = FedAvgAggregate(t, w);
  for (double v : weighted.params.data()) EXPECT_EQ(v, 3.0);
  std::vector<ModelState> u = {StateWith(spec, 7), StateWith(spec, 4),
                               StateWith(spec, 5)};
  std::vector<double> one = {0, 1, 0};
  EXPECT_EQ(FedAvgAggregate(u, one).params, u[1].params);
}

TEST(FedAvgTest, EqualParamsAreAFixedPoint) {
  ModelSpec spec = ModelSpec::Mlp({1, 3, 3}, {4}, 3);
  ModelState a = InitModel(spec, 5);
  std::vector<ModelState> s(4, a);
  std::vector<double> w = {0.5, 2, 3, 1};
  ModelState avg = FedAvgAggregate(s, w);
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    EXPECT_NEAR(avg.params.data()[i], a.params.data()[i], 1e-15);
  }
}

TEST(FedAvgTest, RejectsBadInputs) {
  ModelSpec a = ModelSpec::Mlp({1, 2, 2}, {}, 2);
  ModelSpec b = ModelSpec::Mlp({1, 2, 2}, {}, 3);
  std::vector<ModelState> mixed = {InitModel(a, 1), InitModel(b, 1)};
  std::vector<double> w = {1, 1};
  EXPECT_THROW(FedAvgAggregate(mixed, w), ConfigError);
  std::vector<ModelState> same = {InitModel(a, 1), InitModel(a, 2)};
  std::vector<double> zero = {0, 0};
  EXPECT_THROW(FedAvgAggregate(same, zero), ConfigError);
  std::vector<double> neg = {1, -1};
  EXPECT_THROW(FedAvgAggregate(same, neg), ConfigError);
}

FederatedConfig SmallFedConfig(bool priv) {
  FederatedConfig cfg;
  cfg.rounds = 3;
  cfg.local_epochs = 2;
  cfg.local.sample_rate = 0.2;
  cfg.local.lr = 0.3;
  cfg.local.checkpoints = 3;
  if (priv) {
    cfg.local.privacy = PrivacyParams{};
    cfg.local.privacy->epsilon = 8.0;
    cfg.local.privacy->delta = 1e-3;
  }
  return cfg;
}

TEST(FederatedTrainTest, OneClientEqualsCentralizedTraining) {
  ModelSpec spec = ModelSpec::Mlp({1, 2, 2}, {3}, 2);
  Dataset d = Labeled(40, 2, 2);
  ModelState init = InitModel(spec, 3);
  for (bool priv : {false, true}) {
    FederatedConfig fc = SmallFedConfig(priv);
    ClientPartition p = PartitionDataset(d, 1, PartitionStrategy::Iid(), 1);
    FederatedResult fed = FederatedTrain(init, d, p, fc, 77);
    TrainConfig tc = fc.local;
    tc.epochs = fc.rounds * fc.local_epochs;
    TrainResult central = Train(init, d, tc, 77);
    EXPECT_EQ(fed.global.params, central.state.params);
    EXPECT_EQ(fed.client_accountants[0], central.accountant);
  }
}

TEST(FederatedTrainTest, ZeroRoundsReturnsInitialModel) {
  ModelSpec spec = ModelSpec::Mlp({1, 2, 2}, {3}, 2);
  Dataset d = Labeled(40, 2, 2);
  ModelState init = InitModel(spec, 3);
  FederatedConfig fc = SmallFedConfig(false);
  fc.rounds = 0;
  ClientPartition p = PartitionDataset(d, 4, PartitionStrategy::Iid(), 1);
  FederatedResult r = FederatedTrain(init, d, p, fc, 1);
  EXPECT_EQ(r.global.params, init.params);
  ASSERT_EQ(r.checkpoints.size(), 3u);
  EXPECT_EQ(r.checkpoints[2].state.params, init.params);
}

TEST(FederatedTrainTest, DeterministicAndWorkerCountIndependent) {
  ModelSpec spec = ModelSpec::Mlp({1, 2, 2}, {3}, 2);
  Dataset d = Labeled(60, 2, 2);
  ModelState init = InitModel(spec, 3);
  FederatedConfig fc = SmallFedConfig(true);
  ClientPartition p =
      PartitionDataset(d, 3, PartitionStrategy::Dirichlet(1.0), 5);
  const std::size_t saved = WorkerCount();
  SetWorkerCount(1);
  FederatedResult a = FederatedTrain(init, d, p, fc, 9);
  SetWorkerCount(3);
  FederatedResult b = FederatedTrain(init, d, p, fc, 9);
  SetWorkerCount(saved);
  EXPECT_EQ(a.global.params, b.global.params);
  ASSERT_EQ(a.checkpoints.size(), 3u);
  EXPECT_EQ(a.checkpoints[2].step, 3u);
  EXPECT_EQ(a.checkpoints[2].state.params, a.global.params);
  ASSERT_EQ(a.client_accountants.size(), 3u);
  for (const AccountantState& acc : a.client_accountants) {
    EXPECT_EQ(acc.TotalSteps(), 3u * 2u * 5u);
    EXPECT_LE(ConvertRdpToDp(acc, 1e-3), 8.0);
  }
}

ReleasedScores Released(std::vector<SampleId> ids, std::vector<double> v,
                        double eps = 0.5) {
  ReleasedScores r;
  r.metric = Metric::kVog;
  r.epsilon_per_value = eps;
  r.ids = std::move(ids);
  r.values = std::move(v);
  return r;
}

ClientPartition TwoClients() {
  ClientPartition p;
  p.positions = {{0, 1}, {2, 3}};
  p.ids = {{10, 11}, {12, 13}};
  return p;
}

TEST(RewardsTest, ProportionalSplit) {
  auto r = AllocateRewards(Released({10, 11, 12, 13}, {1, 1, 2, 4}),
                           TwoClients(), 1.0);
  EXPECT_DOUBLE_EQ(r[0].reward, 0.25);
  EXPECT_DOUBLE_EQ(r[1].reward, 0.75);
  EXPECT_EQ(r[0].score_sum_released, 2.0);
  EXPECT_EQ(r[1].n_samples, 2u);
  EXPECT_EQ(r[1].epsilon_spent, 1.0);
  EXPECT_EQ(r[0].metric, "vog");
}

TEST(RewardsTest, ZeroScoresSplitEqually) {
  auto r = AllocateRewards(Released({10, 11, 12, 13}, {0, 0, 0, 0}),
                           TwoClients(), 3.0);
  EXPECT_EQ(r[0].reward, 1.5);
  EXPECT_EQ(r[1].reward, 1.5);
}

TEST(RewardsTest, NegativeSumsAreFlooredAtZero) {
  auto r = AllocateRewards(Released({10, 11, 12, 13}, {-3, 1, 0.5, 0.5}),
                           TwoClients(), 2.0);
  EXPECT_EQ(r[0].reward, 0.0);
  EXPECT_EQ(r[1].reward, 2.0);
  EXPECT_EQ(r[0].score_sum_released, -2.0);
}

TEST(RewardsTest, ConservesThePool) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.3, 1.0);
  Dataset d = Labeled(500, 5, 1);
  ClientPartition p =
      PartitionDataset(d, 7, PartitionStrategy::Dirichlet(0.5), 3);
  std::vector<SampleId> ids;
  std::vector<double> v;
  for (const Sample& s : d.samples) {
    ids.push_back(s.id);
    v.push_back(normal(rng));
  }
  for (double pool : {1.0, 1000.0, 0.0}) {
    auto r = AllocateRewards(Released(ids, v), p, pool);
    double sum = 0.0;
    for (const ClientReport& c : r) {
      EXPECT_GE(c.reward, 0.0);
      sum += c.reward;
    }
    EXPECT_NEAR(sum, pool, 1e-9);
  }
}

TEST(RewardsTest, RequiresCoverageOfEverySample) {
  EXPECT_THROW(
      AllocateRewards(Released({10, 11, 12}, {1, 1, 1}), TwoClients(), 1.0),
      ConfigError);
  EXPECT_THROW(AllocateRewards(Released({10, 11, 12, 13}, {1, 1, 1, 1}),
                               TwoClients(), -1.0),
               ConfigError);
}

}  // namespace
}  // namespace fedval
