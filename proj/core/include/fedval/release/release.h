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
#ifndef FEDVAL_RELEASE_RELEASE_H_
#define FEDVAL_RELEASE_RELEASE_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedval/models/dataset.h"
#include "fedval/util/rng.h"
#include "fedval/valuation/scores.h"

// Pure-DP publication of scores: clamped Laplace releases, a DP variance
// query, and a budget ledger with basic composition.
namespace fedval {

enum class Mechanism { kLaplace, kDpVariance };
std::string ToString(Mechanism m);
Mechanism MechanismFromString(const std::string& s);

struct ReleaseEntry {
  std::string label;
  Mechanism mechanism = Mechanism::kLaplace;
  double epsilon = 0.0;

  friend bool operator==(const ReleaseEntry&, const ReleaseEntry&) = default;
};

// Append-only ledger of (epsilon, 0)-DP releases. Total spend is the sum.
class ReleaseBudget {
 public:
  ReleaseBudget() = default;
  explicit ReleaseBudget(std::optional<double> cap) : cap_(cap) {}

  // Appends one entry. Throws ConfigError for epsilon <= 0 and
  // BudgetExceededError (leaving the ledger unchanged) past the cap.
  void Spend(double epsilon, const std::string& label, Mechanism mechanism);
  // All-or-nothing: either every entry is recorded or none is.
  void SpendAll(std::span<const ReleaseEntry> entries);

  double Total() const;
  std::optional<double> cap() const { return cap_; }
  const std::vector<ReleaseEntry>& entries() const { return entries_; }

 private:
  std::optional<double> cap_;
  std::vector<ReleaseEntry> entries_;
};

// Clamps each value to [0, b] and adds Laplace(b / epsilon) noise. Charges
// epsilon once per published scalar (labelled label[i]) when a budget is
// given; nothing is drawn if the budget refuses.
std::vector<double> LaplaceRelease(std::span<const double> values, double b,
                                   double epsilon, Rng& rng,
                                   ReleaseBudget* budget = nullptr,
                                   const std::string& label = "laplace");

// Noisy population variance of values clamped to [0, b]: Laplace-noised
// sum (sensitivity b) and sum of squares (sensitivity b^2), each with its
// share of epsilon, combined as max(0, S2/n - (S1/n)^2).
double DpVarianceQuery(std::span<const double> values, double b,
                       double epsilon, Rng& rng,
                       ReleaseBudget* budget = nullptr,
                       double sum_share = 0.5,
                       const std::string& label = "dp-variance");

// One metric's scores as published. Downstream consumers (rewards,
// cross-site reports) only ever see this type.
struct ReleasedScores {
  Metric metric = Metric::kVog;
  Mechanism mechanism = Mechanism::kLaplace;
  double clip_bound = 1.0;
  double epsilon_per_value = 0.0;
  // Hash of the release seed, published instead of the seed itself.
  std::uint64_t seed_commitment = 0;
  std::vector<SampleId> ids;
  std::vector<double> values;

  std::size_t size() const { return ids.size(); }
  double TotalEpsilon() const {
    return epsilon_per_value * static_cast<double>(values.size());
  }

  // CSV with header sample_id,metric,released_value,epsilon,mechanism.
  void WriteCsv(const std::string& path) const;
  static ReleasedScores ReadCsv(const std::string& path);

  friend bool operator==(const ReleasedScores&,
                         const ReleasedScores&) = default;
};

// Releases one metric's per-class normalized scores (or raw scores when
// `normalized` is false) with the Laplace mechanism.
ReleasedScores ReleaseScores(const ScoreTable& table, Metric metric, double b,
                             double epsilon, std::uint64_t seed,
                             ReleaseBudget* budget = nullptr,
                             bool normalized = true);

}  // namespace fedval

#endif  // FEDVAL_RELEASE_RELEASE_H_
