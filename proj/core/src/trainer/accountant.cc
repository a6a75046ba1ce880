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
#include "fedval/trainer/accountant.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>

#include "fedval/util/errors.h"

namespace fedval {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMaxSigma = 1e4;

constexpr std::array<double, 64> MakeOrders() {
  std::array<double, 64> a{};
  a[0] = 1.5;
  for (int i = 1; i < 64; ++i) a[i] = i + 1;
  return a;
}
constexpr std::array<double, 64> kOrders = MakeOrders();

double LogAdd(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// log(exp(a) - exp(b)), requires a >= b.
double LogSub(double a, double b) {
  if (b == -kInf) return a;
  if (a <= b) return -kInf;
  return a + std::log1p(-std::exp(b - a));
}

double LogErfc(double x) {
  if (x < 25.0) return std::log(std::erfc(x));
  // Asymptotic expansion; erfc underflows past ~26.
  const double r = 1.0 / (x * x);
  return -x * x - std::log(x) - 0.5 * std::log(M_PI) +
         std::log1p(-0.5 * r + 0.75 * r * r - 1.875 * r * r * r);
}

// log A_alpha for integer alpha, expanding the binomial.
double LogAInt(double q, double sigma, int alpha) {
  double log_a = -kInf;
  for (int i = 0; i <= alpha; ++i) {
    const double log_binom = std::lgamma(alpha + 1.0) - std::lgamma(i + 1.0) -
                             std::lgamma(alpha - i + 1.0);
    const double log_coef =
        log_binom + i * std::log(q) + (alpha - i) * std::log1p(-q);
    log_a = LogAdd(log_a,
                   log_coef + (1.0 * i * i - i) / (2.0 * sigma * sigma));
  }
  return log_a;
}

// log A_alpha for fractional alpha via the two-sided erfc series.
double LogAFrac(double q, double sigma, double alpha) {
  double log_a0 = -kInf;
  double log_a1 = -kInf;
  const double z0 = sigma * sigma * std::log(1.0 / q - 1.0) + 0.5;
  double log_abs_coef = 0.0;  // |binom(alpha, 0)| = 1
  bool positive = true;
  for (int i = 0;; ++i) {
    const double j = alpha - i;
    const double log_t0 = log_abs_coef + i * std::log(q) + j * std::log1p(-q);
    const double log_t1 = log_abs_coef + j * std::log(q) + i * std::log1p(-q);
    const double log_e0 =
        std::log(0.5) + LogErfc((i - z0) / (std::sqrt(2.0) * sigma));
    const double log_e1 =
        std::log(0.5) + LogErfc((z0 - j) / (std::sqrt(2.0) * sigma));
    const double log_s0 =
        log_t0 + (1.0 * i * i - i) / (2.0 * sigma * sigma) + log_e0;
    const double log_s1 = log_t1 + (j * j - j) / (2.0 * sigma * sigma) + log_e1;
    if (positive) {
      log_a0 = LogAdd(log_a0, log_s0);
      log_a1 = LogAdd(log_a1, log_s1);
    } else {
      log_a0 = LogSub(log_a0, log_s0);
      log_a1 = LogSub(log_a1, log_s1);
    }
    if (std::max(log_s0, log_s1) < -30.0 || i > 100000) break;
    // binom(alpha, i+1) = binom(alpha, i) * (alpha - i) / (i + 1).
    const double factor = (alpha - i) / (i + 1.0);
    if (factor < 0) positive = !positive;
    log_abs_coef += std::log(std::abs(factor));
  }
  return LogAdd(log_a0, log_a1);
}

double RdpPerStep(double q, double sigma, double alpha) {
  if (q == 0.0) return 0.0;
  if (q == 1.0) return alpha / (2.0 * sigma * sigma);
  if (std::isinf(sigma)) return 0.0;
  const double log_a = alpha == std::floor(alpha)
                           ? LogAInt(q, sigma, static_cast<int>(alpha))
                           : LogAFrac(q, sigma, alpha);
  return std::max(0.0, log_a / (alpha - 1.0));
}

void CheckDelta(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ConfigError("delta must lie in (0, 1), got " + std::to_string(delta));
  }
}

}  // namespace

std::span<const double> RdpOrders() { return kOrders; }

double RdpEpsilon(double q, double sigma, std::uint64_t steps, double alpha) {
  if (!(alpha > 1.0)) {
    throw ConfigError("Renyi order must exceed 1, got " +
                      std::to_string(alpha));
  }
  if (!(sigma > 0.0)) {
    throw ConfigError("noise multiplier must be positive, got " +
                      std::to_string(sigma));
  }
  if (!(q >= 0.0 && q <= 1.0)) {
    throw ConfigError("sample rate must lie in [0, 1], got " +
                      std::to_string(q));
  }
  return static_cast<double>(steps) * RdpPerStep(q, sigma, alpha);
}

double RdpToEpsilon(std::span<const double> rdp, double delta) {
  CheckDelta(delta);
  if (rdp.size() != kOrders.size()) {
    throw ConfigError("RDP vector must cover all " +
                      std::to_string(kOrders.size()) + " orders");
  }
  double best = kInf;
  for (std::size_t i = 0; i < kOrders.size(); ++i) {
    best = std::min(best, rdp[i] + std::log(1.0 / delta) / (kOrders[i] - 1.0));
  }
  return best;
}

void AccountantState::Record(double sample_rate, double noise_multiplier,
                             std::uint64_t steps) {
  if (!(sample_rate > 0.0 && sample_rate <= 1.0)) {
    throw ConfigError("sample rate must lie in (0, 1], got " +
                      std::to_string(sample_rate));
  }
  if (!(noise_multiplier >= 0.0)) {
    throw ConfigError("noise multiplier must be nonnegative");
  }
  entries_.push_back({sample_rate, noise_multiplier, steps});
}

std::uint64_t AccountantState::TotalSteps() const {
  std::uint64_t total = 0;
  for (const LedgerEntry& e : entries_) total += e.steps;
  return total;
}

std::vector<double> AccountantState::Rdp() const {
  // Training appends one entry per step, so group identical mechanisms.
  std::map<std::pair<double, double>, std::uint64_t> groups;
  for (const LedgerEntry& e : entries_) {
    groups[{e.sample_rate, e.noise_multiplier}] += e.steps;
  }
  std::vector<double> rdp(kOrders.size(), 0.0);
  for (const auto& [key, steps] : groups) {
    const auto [q, sigma] = key;
    for (std::size_t i = 0; i < kOrders.size(); ++i) {
      rdp[i] += sigma == 0.0 ? kInf : RdpEpsilon(q, sigma, steps, kOrders[i]);
    }
  }
  return rdp;
}

double ConvertRdpToDp(const AccountantState& accountant, double delta) {
  if (accountant.empty()) {
    throw ConfigError("cannot convert an empty privacy ledger");
  }
  return RdpToEpsilon(accountant.Rdp(), delta);
}

double ScheduleEpsilon(std::span<const SchedulePhase> schedule, double sigma,
                       double delta) {
  AccountantState acc;
  for (const SchedulePhase& p : schedule) {
    acc.Record(p.sample_rate, sigma, p.steps);
  }
  return ConvertRdpToDp(acc, delta);
}

double CalibrateSigma(double target_epsilon, double delta,
                      std::span<const SchedulePhase> schedule) {
  if (!(target_epsilon > 0.0)) {
    throw ConfigError("target epsilon must be positive");
  }
  if (schedule.empty()) throw ConfigError("empty training schedule");
  CheckDelta(delta);
  auto eps = [&](double s) { return ScheduleEpsilon(schedule, s, delta); };
  if (eps(kMaxSigma) > target_epsilon) {
    throw ConfigError("target epsilon " + std::to_string(target_epsilon) +
                      " is unreachable with noise multiplier <= 1e4");
  }
  double lo = 0.0;
  double hi = 0.5;
  while (eps(hi) > target_epsilon) {
    lo = hi;
    hi = std::min(2.0 * hi, kMaxSigma);
  }
  while (hi - lo > 1e-3) {
    const double mid = 0.5 * (lo + hi);
    (eps(mid) > target_epsilon ? lo : hi) = mid;
  }
  return hi;
}

double CalibrateSigma(double target_epsilon, double delta, double sample_rate,
                      std::uint64_t steps) {
  const SchedulePhase phase{sample_rate, steps};
  return CalibrateSigma(target_epsilon, delta,
                        std::span<const SchedulePhase>(&phase, 1));
}

}  // namespace fedval
