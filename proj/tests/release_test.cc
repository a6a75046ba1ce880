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
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "fedval/release/release.h"
#include "fedval/util/errors.h"
#include "fedval/util/rng.h"
#include "test_util.h"

namespace fedval {
namespace {

TEST(LaplaceReleaseTest, VanishingNoiseReturnsClampedValues) {
  Rng rng(1);
  std::vector<double> v = {0.2, 5.0, -3.0, 0.999};
  std::vector<double> out = LaplaceRelease(v, 1.0, 1e9, rng);
  const std::vector<double> clamped = {0.2, 1.0, 0.0, 0.999};
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_NEAR(out[i], clamped[i], 1e-6);
  }
}

TEST(LaplaceReleaseTest, NoiseMomentsMatchLaplace) {
  Rng rng(2);
  const std::size_t n = 100000;
  std::vector<double> zeros(n, 0.0);
  std::vector<double> out = LaplaceRelease(zeros, 1.0, 1.0, rng);
  // Values clamp to 0, so the outputs are the noise itself.
  const double mean = std::accumulate(out.begin(), out.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : out) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1));
  EXPECT_NEAR(sd, std::sqrt(2.0), 0.02 * std::sqrt(2.0));
  EXPECT_LT(std::abs(mean), 3.0 * std::sqrt(2.0) / std::sqrt(double(n)));
}

TEST(LaplaceReleaseTest, DependsOnlyOnClampedValues) {
  Rng a(5), b(5);
  std::vector<double> x = {0.5, 1.0, 0.0};
  std::vector<double> y = {0.5, 7.0, -2.0};
  EXPECT_EQ(LaplaceRelease(x, 1.0, 0.3, a), LaplaceRelease(y, 1.0, 0.3, b));
}

TEST(LaplaceReleaseTest, SeededReleaseIsReproducible) {
  Rng a(9), b(9);
  std::vector<double> x = {0.1, 0.2};
  EXPECT_EQ(LaplaceRelease(x, 1.0, 1.0, a), LaplaceRelease(x, 1.0, 1.0, b));
}

TEST(LaplaceReleaseTest, RejectsNonPositiveParameters) {
  Rng rng(1);
  std::vector<double> x = {0.1};
  EXPECT_THROW(LaplaceRelease(x, 0.0, 1.0, rng), ConfigError);
  EXPECT_THROW(LaplaceRelease(x, 1.0, -1.0, rng), ConfigError);
}

TEST(LaplaceReleaseTest, ChargesOncePerScalar) {
  ReleaseBudget budget;
  Rng rng(1);
  std::vector<double> x = {0.1, 0.2, 0.3};
  LaplaceRelease(x, 1.0, 0.25, rng, &budget);
  EXPECT_EQ(budget.entries().size(), 3u);
  EXPECT_DOUBLE_EQ(budget.Total(), 0.75);
}

double PopulationVariance(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= v.size();
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / v.size();
}

TEST(DpVarianceQueryTest, NoiselessLimitMatchesExactVariance) {
  Rng rng(3);
  EXPECT_NEAR(DpVarianceQuery(std::vector<double>{0.0, 1.0}, 1.0, 1e9, rng),
              0.25, 1e-4);
  std::vector<double> v;
  std::mt19937_64 g(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) v.push_back(u(g));
  EXPECT_NEAR(DpVarianceQuery(v, 1.0, 1e9, rng), PopulationVariance(v), 1e-4);
  EXPECT_NEAR(DpVarianceQuery(std::vector<double>(10, 0.4), 1.0, 1e9, rng),
              0.0, 1e-4);
}

TEST(DpVarianceQueryTest, NeverNegative) {
  Rng rng(4);
  std::vector<double> v(5, 0.5);
  for (int i = 0; i < 2000; ++i) {
    EXPECT_GE(DpVarianceQuery(v, 1.0, 0.1, rng), 0.0);
  }
}

TEST(DpVarianceQueryTest, SplitsEpsilonBetweenTheSums) {
  ReleaseBudget budget;
  Rng rng(5);
  DpVarianceQuery(std::vector<double>{0.1, 0.9}, 1.0, 2.0, rng, &budget);
  ASSERT_EQ(budget.entries().size(), 2u);
  EXPECT_EQ(budget.entries()[0].epsilon, 1.0);
  EXPECT_EQ(budget.entries()[1].epsilon, 1.0);
  EXPECT_EQ(budget.Total(), 2.0);
}

TEST(DpVarianceQueryTest, NeedsTwoValues) {
  Rng rng(1);
  EXPECT_THROW(DpVarianceQuery(std::vector<double>{0.1}, 1.0, 1.0, rng),
               ConfigError);
}

TEST(ReleaseBudgetTest, AdditiveComposition) {
  ReleaseBudget b;
  EXPECT_EQ(b.Total(), 0.0);
  b.Spend(0.5, "a", Mechanism::kLaplace);
  b.Spend(0.5, "b", Mechanism::kLaplace);
  EXPECT_EQ(b.Total(), 1.0);
}

TEST(ReleaseBudgetTest, CapRefusalIsAtomic) {
  ReleaseBudget b(1.0);
  b.Spend(0.5, "a", Mechanism::kLaplace);
  b.Spend(0.5, "b", Mechanism::kLaplace);
  const auto before = b.entries();
  EXPECT_THROW(b.Spend(0.5, "c", Mechanism::kLaplace), BudgetExceededError);
  EXPECT_EQ(b.entries(), before);
  EXPECT_EQ(b.Total(), 1.0);
}

TEST(ReleaseBudgetTest, RefusedReleaseDrawsNothing) {
  ReleaseBudget b(1.0);
  Rng rng(7);
  const Rng snapshot = rng;
  std::vector<double> x = {0.1, 0.2, 0.3};
  EXPECT_THROW(LaplaceRelease(x, 1.0, 0.5, rng, &b), BudgetExceededError);
  EXPECT_TRUE(b.entries().empty());
  EXPECT_EQ(rng, snapshot);
  EXPECT_THROW(DpVarianceQuery(x, 1.0, 1.5, rng, &b), BudgetExceededError);
  EXPECT_TRUE(b.entries().empty());
  EXPECT_EQ(rng, snapshot);
}

TEST(ReleaseBudgetTest, RejectsNonPositiveEpsilon) {
  ReleaseBudget b;
  EXPECT_THROW(b.Spend(0.0, "z", Mechanism::kLaplace), ConfigError);
}

ScoreTable SmallTable() {
  ScoreTable t;
  t.ids = {10, 11, 12, 13};
  t.labels = {0, 0, 1, 1};
  t.Set(Metric::kVog, {0.1, 0.4, 2.0, 3.0});
  return t;
}

TEST(ReleaseScoresTest, PublishesNormalizedScoresWithMetadata) {
  ScoreTable t = SmallTable();
  ReleaseBudget budget;
  ReleasedScores r = ReleaseScores(t, Metric::kVog, 1.0, 1e9, 42, &budget);
  EXPECT_EQ(r.ids, t.ids);
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_NEAR(r.values[i], t.Normalized(Metric::kVog)[i], 1e-6);
  }
  EXPECT_EQ(budget.entries().size(), 4u);
  EXPECT_DOUBLE_EQ(r.TotalEpsilon(), 4e9);
  EXPECT_NE(r.seed_commitment, 42u);
  EXPECT_EQ(r, ReleaseScores(t, Metric::kVog, 1.0, 1e9, 42));
  EXPECT_FALSE(r == ReleaseScores(t, Metric::kVog, 1.0, 1e9, 43));
}

TEST(ReleaseScoresTest, CsvRoundTrip) {
  ReleasedScores r = ReleaseScores(SmallTable(), Metric::kVog, 1.0, 0.5, 1);
  const std::string path =
      (testing::TempDir("release") / "released.csv").string();
  r.WriteCsv(path);
  ReleasedScores back = ReleasedScores::ReadCsv(path);
  EXPECT_EQ(back.ids, r.ids);
  EXPECT_EQ(back.values, r.values);
  EXPECT_EQ(back.metric, r.metric);
  EXPECT_EQ(back.epsilon_per_value, r.epsilon_per_value);
  EXPECT_EQ(back.mechanism, r.mechanism);
}

}  // namespace
}  // namespace fedval
