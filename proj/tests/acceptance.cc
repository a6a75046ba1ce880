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
// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Criterion numbers given as arguments
// restrict the run to those criteria.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedval/autodiff/gradients.h"
#include "fedval/autodiff/ops.h"
#include "fedval/consistency/consistency.h"
#include "fedval/pipeline/config.h"
#include "fedval/pipeline/pipeline.h"
#include "fedval/pipeline/report.h"
#include "fedval/release/release.h"
#include "fedval/trainer/accountant.h"
#include "fedval/util/alloc.h"
#include "fedval/util/errors.h"
#include "fedval/util/rng.h"
#include "fedval/valuation/scores.h"
#include "test_util.h"

namespace fedval {
namespace {

using json = nlohmann::json;
using testing::MaxRelativeError;
using testing::RandomParams;
using testing::RandomTensor;
using testing::SmallSpecs;

// Tolerances and thresholds.
constexpr int kGradCases = 1000;
constexpr double kFirstOrderTol = 1e-6;
constexpr double kFirstOrderStep = 1e-5;
constexpr double kNestedTol = 1e-4;
constexpr double kNestedStep = 1e-4;
constexpr double kGradCpuSeconds = 120.0;
constexpr double kPlisHandTol = 1e-9;
constexpr double kPearsonTol = 1e-12;
constexpr double kBdTol = 1e-6;
constexpr double kSsimTol = 1e-3;
constexpr double kCalibrateTol = 0.01;
constexpr double kDelta = 1e-5;
constexpr double kNonPrivateAccuracy = 0.85;
constexpr double kPrivateAccuracy = 0.70;
constexpr double kTrainCpuSeconds = 600.0;
constexpr int kSeeds = 5;
constexpr int kSeedsRequired = 4;
constexpr std::size_t kTopK = 25;
constexpr std::size_t kMinOverlap = 15;
constexpr int kLaplaceDraws = 100000;
constexpr double kLaplaceStdevTol = 0.02;
constexpr double kVarianceTol = 1e-4;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Fmt(const char* format, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, a);
  return buf;
}

double CpuSeconds() {
  return static_cast<double>(std::clock()) / CLOCKS_PER_SEC;
}

// ---- 1 -----------------------------------------------------------------

Outcome GradientCorrectness() {
  const double start = CpuSeconds();
  std::vector<ModelSpec> specs = SmallSpecs(Activation::kTanh);
  for (const ModelSpec& s : SmallSpecs(Activation::kSoftplus)) {
    specs.push_back(s);
  }
  std::mt19937_64 rng(2026);
  double worst_first = 0.0;
  double worst_nested = 0.0;
  for (int c = 0; c < kGradCases; ++c) {
    const ModelSpec& spec = specs[c % specs.size()];
    ParamVector p = RandomParams(spec, rng);
    Tensor x = RandomTensor(spec.input_shape, rng, 0.0, 1.0);
    const std::size_t label = rng() % spec.num_classes;

    ParamVector gp = GradParams(p, spec, x, label);
    Tensor flat({p.size()},
                std::vector<double>(p.data().begin(), p.data().end()));
    Tensor fd_p = FiniteDiff(
        [&](const Tensor& q) {
          return PerSampleLoss(ParamVector(p.layout_ptr(), q.vec()), spec, x,
                               label);
        },
        flat, kFirstOrderStep);
    worst_first = std::max(worst_first, MaxRelativeError(gp.data(), fd_p.data()));

    Tensor gx = GradInput(p, spec, x, label);
    Tensor fd_x = FiniteDiff(
        [&](const Tensor& q) { return PerSampleLoss(p, spec, q, label); }, x,
        kFirstOrderStep);
    worst_first = std::max(worst_first, MaxRelativeError(gx.data(), fd_x.data()));

    Tensor nested = GradInputOfSqParamGradNorm(p, spec, x, label);
    Tensor fd_n = FiniteDiff(
        [&](const Tensor& q) {
          return GradParams(p, spec, q, label).SquaredNorm();
        },
        x, kNestedStep);
    worst_nested =
        std::max(worst_nested, MaxRelativeError(nested.data(), fd_n.data()));
  }
  const double cpu = CpuSeconds() - start;
  Outcome o;
  o.pass = worst_first <= kFirstOrderTol && worst_nested <= kNestedTol &&
           cpu <= kGradCpuSeconds;
  o.detail = std::to_string(kGradCases) + " cases, first-order max rel err " +
             Fmt("%.3g", worst_first) + ", nested " +
             Fmt("%.3g", worst_nested) + ", cpu " + Fmt("%.1f", cpu) + "s";
  return o;
}

// ---- 2 -----------------------------------------------------------------

Outcome ClosedForms() {
  using autodiff::Var;
  // l = (w x)^2 / 2 at w = 1, x = 1.
  LossProgram program = [](std::span<const Var> p, const Var& x) {
    Var r = autodiff::Mul(p[0], x);
    return autodiff::Scale(autodiff::Mul(r, r), 0.5);
  };
  std::vector<Tensor> params = {Tensor::Scalar(1.0)};
  const double plis =
      ProgramGradInputOfSqParamGradNorm(program, params, Tensor::Scalar(1.0))
          .item();

  GradTrace trace;
  trace.grads = {Tensor({1}, {0.0}), Tensor({1}, {2.0})};
  trace.steps = {1, 2};
  const double vog = VogScalar(VogPixelwise(trace));

  const std::vector<double> xs = {1, 2, 3, 4};
  const std::vector<double> ys = {1, 3, 2, 4};
  const double r = Pearson(xs, ys);

  const double bd = BhattacharyyaFromHistograms(std::vector<double>{1, 0},
                                                std::vector<double>{0.5, 0.5});

  const double ssim = Ssim(Tensor::Filled({1, 8, 8}, 0.5),
                           Tensor::Filled({1, 8, 8}, 0.25));

  Outcome o;
  o.pass = std::abs(plis - 4.0) <= kPlisHandTol && vog == 1.0 &&
           std::abs(r - 0.8) <= kPearsonTol &&
           std::abs(bd - 0.346574) <= kBdTol &&
           std::abs(ssim - 0.8003) <= kSsimTol;
  o.detail = "plis " + Fmt("%.12g", plis) + ", vog " + Fmt("%.12g", vog) +
             ", pearson " + Fmt("%.12g", r) + ", bd " + Fmt("%.8g", bd) +
             ", ssim " + Fmt("%.6g", ssim);
  return o;
}

// ---- 3 -----------------------------------------------------------------

Outcome Accountant() {
  const double rdp = RdpEpsilon(1.0, 1.0, 1, 2.0);
  bool ok = rdp == 1.0;
  std::string detail = "rdp(q=1,sigma=1,T=1,alpha=2) " + Fmt("%.12g", rdp);

  constexpr double kQ = 0.01;
  constexpr std::uint64_t kSteps = 1000;
  for (double eps : {1.0, 4.0, 8.0}) {
    const double sigma = CalibrateSigma(eps, kDelta, kQ, kSteps);
    const std::vector<SchedulePhase> schedule = {{kQ, kSteps}};
    const double back = ScheduleEpsilon(schedule, sigma, kDelta);
    const double rel = std::abs(back - eps) / eps;
    ok = ok && rel <= kCalibrateTol;
    detail += ", eps " + Fmt("%g", eps) + " -> sigma " + Fmt("%.4g", sigma) +
              " -> " + Fmt("%.4g", back);
  }

  std::vector<std::uint64_t> steps;
  std::vector<double> sigmas;
  for (int i = 0; i < 10; ++i) {
    steps.push_back(100 * static_cast<std::uint64_t>(i + 1));
    sigmas.push_back(0.6 + 0.3 * i);
  }
  std::vector<std::vector<double>> grid(10, std::vector<double>(10));
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      const std::vector<SchedulePhase> schedule = {{kQ, steps[i]}};
      grid[i][j] = ScheduleEpsilon(schedule, sigmas[j], kDelta);
    }
  }
  int violations = 0;
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      if (i > 0 && grid[i][j] < grid[i - 1][j]) ++violations;
      if (j > 0 && grid[i][j] > grid[i][j - 1]) ++violations;
    }
  }
  ok = ok && violations == 0;
  detail += ", 10x10 monotonicity violations " + std::to_string(violations);
  return {ok, detail};
}

// ---- 4 -----------------------------------------------------------------

json MnistConfig() {
  return json::parse(R"({
    "seed": 1,
    "dataset": {"source": "idx",
                "images": "data/mnist5k/images.idx3-ubyte",
                "labels": "data/mnist5k/labels.idx1-ubyte",
                "test_fraction": 0.2},
    "model": {"arch": "cnn",
              "conv": [{"channels": 8, "kernel": 3, "stride": 1},
                       {"channels": 16, "kernel": 3, "stride": 1}],
              "head_width": 32},
    "train": {"epochs": 5, "lr": 0.5, "sample_rate": 0.016, "checkpoints": 2}
  })");
}

Outcome DpSgdSanity() {
  json plain = MnistConfig();
  json priv = MnistConfig();
  priv["train"]["epochs"] = 10;
  priv["train"]["lr"] = 1.0;
  priv["train"]["privacy"] = {{"epsilon", 8.0}, {"delta", kDelta},
                              {"clip_norm", 1.0}};
  Outcome o;
  o.pass = true;
  for (const auto& [name, cfg, threshold] :
       {std::tuple{"non-private", plain, kNonPrivateAccuracy},
        std::tuple{"eps=8", priv, kPrivateAccuracy}}) {
    const double start = CpuSeconds();
    RunOutput out = RunTrain(ExperimentConfig::FromJson(cfg), RunOptions{});
    const double cpu = CpuSeconds() - start;
    const json& t = out.report.results.at("training");
    const double acc = t.at("test_accuracy").get<double>();
    o.pass = o.pass && acc >= threshold && cpu <= kTrainCpuSeconds;
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += std::string(name) + " n_train " +
                std::to_string(t.at("n_train").get<std::size_t>()) +
                " acc " + Fmt("%.4f", acc) + " cpu " + Fmt("%.0f", cpu) + "s";
  }
  return o;
}

// ---- 5 -----------------------------------------------------------------

json PruneConfig(int seed, double epsilon) {
  json c = json::parse(R"({
    "dataset": {"source": "synthetic",
                "synthetic": {"n": 3000, "classes": 6, "image_size": 12,
                              "atypical_fraction": 0.1, "label_noise": 0.1,
                              "min_center_distance": 3.0},
                "test_fraction": 0.3},
    "model": {"arch": "cnn", "conv": [{"channels": 8}], "head_width": 32},
    "train": {"epochs": 1, "lr": 1.0, "sample_rate": 0.1, "checkpoints": 5},
    "metrics": ["vog", "plis", "loss"],
    "prune": {"fraction": 0.25}
  })");
  c["seed"] = seed;
  c["train"]["privacy"] = {{"epsilon", epsilon}, {"delta", kDelta}};
  return c;
}

Outcome PruneOrdering() {
  Outcome o;
  o.pass = true;
  int atypical_beats_random = 0;
  int runs = 0;
  for (double eps : {1.0, 8.0}) {
    int holds = 0;
    std::string accs;
    for (int seed = 1; seed <= kSeeds; ++seed) {
      RunOutput out = RunPruneRetrain(
          ExperimentConfig::FromJson(PruneConfig(seed, eps)), RunOptions{});
      const json& v = out.report.results.at("variants");
      const double loss = v.at("loss").at("test_accuracy").get<double>();
      const double vog = v.at("vog").at("test_accuracy").get<double>();
      const double plis = v.at("plis").at("test_accuracy").get<double>();
      if (loss >= vog && vog >= plis) ++holds;
      if (v.at("atypical").at("test_accuracy").get<double>() <=
          v.at("random").at("test_accuracy").get<double>()) {
        ++atypical_beats_random;
      }
      ++runs;
      accs += " " + Fmt("%.3f", loss) + "/" + Fmt("%.3f", vog) + "/" +
              Fmt("%.3f", plis);
    }
    o.pass = o.pass && holds >= kSeedsRequired;
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += "eps " + Fmt("%g", eps) + ": loss>=vog>=plis in " +
                std::to_string(holds) + "/" + std::to_string(kSeeds) +
                " (loss/vog/plis" + accs + ")";
  }
  std::printf("info: removing atypical samples hurt at least as much as "
              "random removal in %d/%d runs\n",
              atypical_beats_random, runs);
  return o;
}

// ---- 6, 7 --------------------------------------------------------------

json CompareConfig(int seed) {
  json c = json::parse(R"({
    "dataset": {"source": "synthetic",
                "synthetic": {"n": 2000, "classes": 6, "image_size": 12,
                              "atypical_fraction": 0.05,
                              "min_center_distance": 3.0},
                "test_fraction": 0.3},
    "model": {"arch": "cnn", "conv": [{"channels": 8}], "head_width": 32},
    "train": {"epochs": 10, "lr": 0.5, "sample_rate": 0.1, "checkpoints": 5},
    "metrics": ["vog", "loss"],
    "compare": {"settings": [{"name": "nondp"},
                             {"name": "dp1", "privacy": {"epsilon": 1}},
                             {"name": "dp4", "privacy": {"epsilon": 4}},
                             {"name": "dp8", "privacy": {"epsilon": 8}}]}
  })");
  c["seed"] = seed;
  c["compare"]["k"] = kTopK;
  return c;
}

// Comparison results of one compare run per seed, shared by criteria 6
// and 7.
const std::vector<json>& CompareRuns() {
  static const std::vector<json> runs = [] {
    std::vector<json> out;
    for (int seed = 1; seed <= kSeeds; ++seed) {
      out.push_back(RunCompare(ExperimentConfig::FromJson(CompareConfig(seed)),
                               RunOptions{})
                        .report.results.at("comparisons"));
    }
    return out;
  }();
  return runs;
}

const json& FindComparison(const json& comparisons, const std::string& a,
                           const std::string& b, const std::string& metric) {
  for (const json& c : comparisons) {
    if (c.at("settings") == json::array({a, b}) && c.at("metric") == metric) {
      return c;
    }
  }
  throw Error("no comparison " + a + "/" + b + "/" + metric);
}

Outcome LossLessConsistentThanVog() {
  int holds = 0;
  std::string detail;
  for (const json& cmp : CompareRuns()) {
    const json& l = FindComparison(cmp, "nondp", "dp1", "loss").at("pearson_r");
    const json& v = FindComparison(cmp, "nondp", "dp1", "vog").at("pearson_r");
    if (l.is_null() || v.is_null()) {
      detail += " undefined";
      continue;
    }
    if (l.get<double>() < v.get<double>()) ++holds;
    detail += " " + Fmt("%.3f", l.get<double>()) + "/" +
              Fmt("%.3f", v.get<double>());
  }
  return {holds >= kSeedsRequired,
          "r_loss < r_vog in " + std::to_string(holds) + "/" +
              std::to_string(kSeeds) + " (loss/vog" + detail + ")"};
}

Outcome VogSelectionConsistency() {
  int holds = 0;
  std::string detail;
  for (const json& cmp : CompareRuns()) {
    const std::size_t overlap = FindComparison(cmp, "dp4", "dp8", "vog")
                                    .at("topk_overlap")
                                    .get<std::size_t>();
    if (overlap >= kMinOverlap) ++holds;
    detail += " " + std::to_string(overlap);
  }
  return {holds >= kSeedsRequired,
          "overlap >= " + std::to_string(kMinOverlap) + "/" +
              std::to_string(kTopK) + " in " + std::to_string(holds) + "/" +
              std::to_string(kSeeds) + " (" + detail.substr(1) + ")"};
}

// ---- 8 -----------------------------------------------------------------

Outcome Mechanisms() {
  constexpr double kB = 1.0;
  constexpr double kEps = 0.5;
  Rng rng(DeriveSeed(8, "acceptance/laplace"));
  const std::vector<double> zeros(kLaplaceDraws, 0.0);
  const std::vector<double> noisy = LaplaceRelease(zeros, kB, kEps, rng);
  double mean = 0.0;
  for (double x : noisy) mean += x;
  mean /= kLaplaceDraws;
  double var = 0.0;
  for (double x : noisy) var += (x - mean) * (x - mean);
  const double stdev = std::sqrt(var / (kLaplaceDraws - 1));
  const double expected = std::sqrt(2.0) * kB / kEps;
  const double stdev_rel = std::abs(stdev - expected) / expected;

  std::vector<double> values(1000);
  std::mt19937_64 data_rng(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (double& x : values) x = unit(data_rng);
  double m = 0.0;
  for (double x : values) m += x;
  m /= values.size();
  double exact = 0.0;
  for (double x : values) exact += (x - m) * (x - m);
  exact /= values.size();
  Rng vrng(DeriveSeed(8, "acceptance/variance"));
  const double dp_var = DpVarianceQuery(values, 1.0, 1e9, vrng);
  const double var_err = std::abs(dp_var - exact);

  ReleaseBudget budget(1.0);
  budget.Spend(0.6, "first", Mechanism::kLaplace);
  const auto before = budget.entries();
  Rng brng(9);
  const Rng snapshot = brng;
  bool refused = false;
  try {
    LaplaceRelease(std::vector<double>{0.1, 0.2}, 1.0, 0.3, brng, &budget);
  } catch (const BudgetExceededError&) {
    refused = true;
  }
  bool spend_all_refused = false;
  try {
    budget.SpendAll(std::vector<ReleaseEntry>{
        {"a", Mechanism::kLaplace, 0.2}, {"b", Mechanism::kLaplace, 0.3}});
  } catch (const BudgetExceededError&) {
    spend_all_refused = true;
  }
  const bool atomic = refused && spend_all_refused &&
                      budget.entries() == before && brng == snapshot;

  Outcome o;
  o.pass = stdev_rel <= kLaplaceStdevTol && var_err <= kVarianceTol && atomic;
  o.detail = "laplace stdev " + Fmt("%.4f", stdev) + " vs " +
             Fmt("%.4f", expected) + " (rel " + Fmt("%.4f", stdev_rel) +
             "), dp variance err " + Fmt("%.3g", var_err) +
             ", cap refusal atomic " + (atomic ? "yes" : "no");
  return o;
}

// ---- 9, 10 -------------------------------------------------------------

json SmallConfig() {
  return json::parse(R"({
    "seed": 3,
    "dataset": {"source": "synthetic",
                "synthetic": {"n": 160, "classes": 3, "image_size": 8}},
    "model": {"arch": "mlp", "hidden": [6]},
    "train": {"epochs": 2, "lr": 0.5, "sample_rate": 0.1, "checkpoints": 3,
              "privacy": {"epsilon": 4}},
    "release": {"epsilon": 2.0, "metrics": ["vog", "loss"],
                "variance_epsilon": 1.0},
    "federation": {"clients": 3, "rounds": 2},
    "compare": {"settings": [{"name": "a", "privacy": {"epsilon": 2}},
                             {"name": "b", "privacy": {"epsilon": 8}}],
                "k": 10},
    "prune": {"fraction": 0.25, "warmup_epochs": 1, "retrain_epochs": 1}
  })");
}

std::string ReadBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

Outcome Determinism() {
  const ExperimentConfig config = ExperimentConfig::FromJson(SmallConfig());
  const auto root =
      std::filesystem::temp_directory_path() / "fedval_acceptance_det";
  std::vector<std::string> differing;
  for (const char* command : {"train", "score", "release", "prune-retrain",
                              "federate", "compare"}) {
    std::string bytes[2];
    for (int run = 0; run < 2; ++run) {
      const auto dir = root / (std::string(command) + std::to_string(run));
      std::filesystem::remove_all(dir);
      std::filesystem::create_directories(dir);
      RunOptions options;
      options.out_dir = dir.string();
      RunOutput out = RunCommand(command, config, options);
      EmitReport(out.report, (dir / "report.json").string());
      bytes[run] = ReadBytes(dir / "report.json");
    }
    if (bytes[0].empty() || bytes[0] != bytes[1]) differing.push_back(command);
  }
  std::filesystem::remove_all(root);
  std::string detail = "6 commands run twice, ";
  if (differing.empty()) {
    detail += "all reports byte-identical";
  } else {
    detail += "differing:";
    for (const auto& c : differing) detail += " " + c;
  }
  return {differing.empty(), detail};
}

Outcome Firewall() {
  const ExperimentConfig config = ExperimentConfig::FromJson(SmallConfig());
  std::vector<std::string> leaking;
  int poisoned_tables = 0;
  for (const char* command : {"release", "federate", "compare"}) {
    RunOptions clean;
    clean.released_only = true;
    RunOptions poisoned = clean;
    poisoned.after_release = [&](ScoreTable& table) {
      ++poisoned_tables;
      for (auto& [metric, raw] : table.raw) {
        std::vector<double> garbage(raw.size());
        for (std::size_t i = 0; i < garbage.size(); ++i) {
          garbage[i] = 1e6 * static_cast<double>((i * 7919) % 13);
        }
        table.Set(metric, garbage);
      }
    };
    Report a = RunCommand(command, config, clean).report;
    Report b = RunCommand(command, config, poisoned).report;
    a.Validate();
    b.Validate();
    if (CanonicalJson(a.ToJson()) != CanonicalJson(b.ToJson())) {
      leaking.push_back(command);
    }
  }
  std::string detail = std::to_string(poisoned_tables) +
                       " raw tables poisoned after release, ";
  if (leaking.empty()) {
    detail += "release/federate/compare reports unchanged";
  } else {
    detail += "changed:";
    for (const auto& c : leaking) detail += " " + c;
  }
  return {leaking.empty() && poisoned_tables > 0, detail};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace fedval

int main(int argc, char** argv) {
  using namespace fedval;
  ConfigureAllocator();
  const std::vector<Criterion> criteria = {
      {1, "gradient correctness", GradientCorrectness},
      {2, "closed-form oracles", ClosedForms},
      {3, "accountant", Accountant},
      {4, "dp-sgd sanity", DpSgdSanity},
      {5, "prune ordering", PruneOrdering},
      {6, "cross-setting score correlation", LossLessConsistentThanVog},
      {7, "selection consistency", VogSelectionConsistency},
      {8, "mechanisms", Mechanisms},
      {9, "determinism", Determinism},
      {10, "firewall", Firewall},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("criterion %2d %s  %s: %s\n", c.id, o.pass ? "PASS" : "FAIL",
                c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
