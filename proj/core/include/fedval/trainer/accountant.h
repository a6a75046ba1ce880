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
#ifndef FEDVAL_TRAINER_ACCOUNTANT_H_
#define FEDVAL_TRAINER_ACCOUNTANT_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

// Renyi-DP accounting for the Poisson-subsampled Gaussian mechanism.
namespace fedval {

// Orders at which RDP is tracked: 1.5, 2, 3, ..., 64. A denser grid can only
// lower the converted epsilon.
std::span<const double> RdpOrders();

// RDP of `steps` compositions of the subsampled Gaussian with sample rate q
// and noise multiplier sigma, at order alpha. q = 1 uses alpha / (2 sigma^2)
// per step. Throws ConfigError for alpha <= 1, sigma <= 0 or q outside [0, 1].
double RdpEpsilon(double q, double sigma, std::uint64_t steps, double alpha);

// min over the grid of rdp[i] + ln(1/delta) / (alpha_i - 1).
double RdpToEpsilon(std::span<const double> rdp, double delta);

struct LedgerEntry {
  double sample_rate = 1.0;
  double noise_multiplier = 0.0;
  std::uint64_t steps = 1;

  friend bool operator==(const LedgerEntry&, const LedgerEntry&) = default;
};

// Append-only record of Gaussian mechanism invocations.
class AccountantState {
 public:
  void Record(double sample_rate, double noise_multiplier,
              std::uint64_t steps = 1);

  const std::vector<LedgerEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::uint64_t TotalSteps() const;

  // Composed RDP at every grid order. Entries with sigma = 0 give +inf.
  std::vector<double> Rdp() const;

  friend bool operator==(const AccountantState&,
                         const AccountantState&) = default;

 private:
  std::vector<LedgerEntry> entries_;
};

// (epsilon, delta) guarantee of everything in the ledger. Throws ConfigError
// on an empty ledger or delta outside (0, 1). Returns +inf if any entry has
// sigma = 0.
double ConvertRdpToDp(const AccountantState& accountant, double delta);

// One phase of a training schedule: `steps` steps at sample rate q.
struct SchedulePhase {
  double sample_rate = 1.0;
  std::uint64_t steps = 1;
};

// Epsilon of a schedule run at a single noise multiplier.
double ScheduleEpsilon(std::span<const SchedulePhase> schedule, double sigma,
                       double delta);

// Smallest sigma (bisection to 1e-3) whose converted epsilon is at most
// `target_epsilon`. Throws ConfigError if sigma = 1e4 is not enough.
double CalibrateSigma(double target_epsilon, double delta,
                      std::span<const SchedulePhase> schedule);
double CalibrateSigma(double target_epsilon, double delta, double sample_rate,
                      std::uint64_t steps);

}  // namespace fedval

#endif  // FEDVAL_TRAINER_ACCOUNTANT_H_
