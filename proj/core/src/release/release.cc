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
#include "fedval/release/release.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <utility>

#include "fedval/util/errors.h"

namespace fedval {
namespace {

void CheckPositive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ConfigError(std::string(what) + " must be positive and finite, got " +
                      std::to_string(v));
  }
}

double Clamp(double v, double b) { return std::clamp(v, 0.0, b); }

std::string FormatDouble(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string ToString(Mechanism m) {
  return m == Mechanism::kLaplace ? "laplace" : "dp-variance";
}

Mechanism MechanismFromString(const std::string& s) {
  if (s == "laplace") return Mechanism::kLaplace;
  if (s == "dp-variance") return Mechanism::kDpVariance;
  throw ConfigError("unknown release mechanism '" + s + "'");
}

void ReleaseBudget::Spend(double epsilon, const std::string& label,
                          Mechanism mechanism) {
  const ReleaseEntry e{label, mechanism, epsilon};
  SpendAll(std::span<const ReleaseEntry>(&e, 1));
}

void ReleaseBudget::SpendAll(std::span<const ReleaseEntry> entries) {
  double extra = 0.0;
  for (const ReleaseEntry& e : entries) {
    CheckPositive(e.epsilon, "release epsilon");
    extra += e.epsilon;
  }
  if (cap_ && Total() + extra > *cap_ * (1.0 + 1e-12)) {
    throw BudgetExceededError(
        "release of epsilon " + std::to_string(extra) + " would exceed the cap " +
        std::to_string(*cap_) + " (already spent " + std::to_string(Total()) +
        ")");
  }
  entries_.insert(entries_.end(), entries.begin(), entries.end());
}

double ReleaseBudget::Total() const {
  double total = 0.0;
  for (const ReleaseEntry& e : entries_) total += e.epsilon;
  return total;
}

std::vector<double> LaplaceRelease(std::span<const double> values, double b,
                                   double epsilon, Rng& rng,
                                   ReleaseBudget* budget,
                                   const std::string& label) {
  CheckPositive(b, "clip bound");
  CheckPositive(epsilon, "epsilon");
  if (budget) {
    std::vector<ReleaseEntry> charges(
        values.size(), ReleaseEntry{label, Mechanism::kLaplace, epsilon});
    budget->SpendAll(charges);
  }
  const double scale = b / epsilon;
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = Clamp(values[i], b) + SampleLaplace(rng, scale);
  }
  return out;
}

double DpVarianceQuery(std::span<const double> values, double b,
                       double epsilon, Rng& rng, ReleaseBudget* budget,
                       double sum_share, const std::string& label) {
  if (values.size() < 2) {
    throw ConfigError("variance query needs at least 2 values, got " +
                      std::to_string(values.size()));
  }
  CheckPositive(b, "clip bound");
  CheckPositive(epsilon, "epsilon");
  if (!(sum_share > 0.0 && sum_share < 1.0)) {
    throw ConfigError("variance query epsilon share must lie in (0, 1)");
  }
  const double eps_sum = epsilon * sum_share;
  const double eps_sq = epsilon - eps_sum;
  if (budget) {
    const ReleaseEntry charges[] = {
        {label + "/sum", Mechanism::kDpVariance, eps_sum},
        {label + "/sum_sq", Mechanism::kDpVariance, eps_sq}};
    budget->SpendAll(charges);
  }
  double s1 = 0.0, s2 = 0.0;
  for (double v : values) {
    const double c = Clamp(v, b);
    s1 += c;
    s2 += c * c;
  }
  s1 += SampleLaplace(rng, b / eps_sum);
  s2 += SampleLaplace(rng, b * b / eps_sq);
  const double n = static_cast<double>(values.size());
  return std::max(0.0, s2 / n - (s1 / n) * (s1 / n));
}

ReleasedScores ReleaseScores(const ScoreTable& table, Metric metric, double b,
                             double epsilon, std::uint64_t seed,
                             ReleaseBudget* budget, bool normalized) {
  const std::vector<double>& src =
      normalized ? table.Normalized(metric) : table.Raw(metric);
  Rng rng = MakeRng(seed, "release/" + ToString(metric));
  ReleasedScores out;
  out.metric = metric;
  out.mechanism = Mechanism::kLaplace;
  out.clip_bound = b;
  out.epsilon_per_value = epsilon;
  out.seed_commitment = DeriveSeed(seed, "release-commitment");
  out.ids = table.ids;
  out.values =
      LaplaceRelease(src, b, epsilon, rng, budget, "scores/" + ToString(metric));
  return out;
}

void ReleasedScores::WriteCsv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "sample_id,metric,released_value,epsilon,mechanism\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << ids[i] << ',' << ToString(metric) << ',' << FormatDouble(values[i])
        << ',' << FormatDouble(epsilon_per_value) << ',' << ToString(mechanism)
        << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

ReleasedScores ReleasedScores::ReadCsv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) ||
      line != "sample_id,metric,released_value,epsilon,mechanism") {
    throw IoError("'" + path + "' is not a released scores CSV");
  }
  ReleasedScores r;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 5) {
      throw IoError(path + ":" + std::to_string(line_no) +
                    ": expected 5 fields");
    }
    try {
      const Metric m = MetricFromString(f[1]);
      const double eps = std::stod(f[3]);
      const Mechanism mech = MechanismFromString(f[4]);
      if (r.ids.empty()) {
        r.metric = m;
        r.epsilon_per_value = eps;
        r.mechanism = mech;
      } else if (m != r.metric || eps != r.epsilon_per_value ||
                 mech != r.mechanism) {
        throw IoError(path + ":" + std::to_string(line_no) +
                      ": mixed metric, epsilon or mechanism");
      }
      r.ids.push_back(std::stoull(f[0]));
      r.values.push_back(std::stod(f[2]));
    } catch (const std::logic_error& e) {
      throw IoError(path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw IoError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return r;
}

}  // namespace fedval
