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
#include "fedval/pipeline/pipeline.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "fedval/consistency/consistency.h"
#include "fedval/federation/federation.h"
#include "fedval/models/model.h"
#include "fedval/release/release.h"
#include "fedval/trainer/accountant.h"
#include "fedval/trainer/trainer.h"
#include "fedval/util/rng.h"

namespace fedval {

using nlohmann::json;

namespace {

constexpr std::size_t kSummaryTopK = 10;

// Runs `fn`, tagging failures with the stage name. Config errors keep their
// type so the CLI can map them to the config exit code.
template <typename Fn>
auto Stage(const std::string& name, json& timings, Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  auto record = [&] {
    const std::chrono::duration<double> dt =
        std::chrono::steady_clock::now() - start;
    timings[name] = timings.value(name, 0.0) + dt.count();
  };
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      record();
    } else {
      auto out = fn();
      record();
      return out;
    }
  } catch (const ConfigError& e) {
    throw ConfigError("stage '" + name + "': " + e.what());
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

struct Seeds {
  std::uint64_t master;
  std::uint64_t data;
  std::uint64_t init;
  std::uint64_t train;
  std::uint64_t release;

  explicit Seeds(std::uint64_t m)
      : master(m),
        data(DeriveSeed(m, "data")),
        init(DeriveSeed(m, "init")),
        train(DeriveSeed(m, "train")),
        release(DeriveSeed(m, "release")) {}

  json ToJson() const {
    return {{"master", master},
            {"data", data},
            {"init", init},
            {"train", train},
            {"release", release}};
  }
};

Report NewReport(const std::string& command, const ExperimentConfig& config,
                 const Seeds& seeds) {
  Report r;
  r.command = command;
  r.config_hash = config.Hash();
  r.config = config.ToJson();
  r.seeds = seeds.ToJson();
  return r;
}

void AddWarnings(Report& report, const std::vector<std::string>& warnings) {
  for (const std::string& w : warnings) {
    if (std::find(report.warnings.begin(), report.warnings.end(), w) ==
        report.warnings.end()) {
      report.warnings.push_back(w);
    }
  }
}

std::string SidePath(const RunOptions& options, const std::string& name) {
  if (options.out_dir.empty()) return "";
  std::filesystem::create_directories(options.out_dir);
  return (std::filesystem::path(options.out_dir) / name).string();
}

TrainConfig MakeTrainConfig(const TrainSection& section,
                            const std::optional<PrivacyConfig>& privacy) {
  TrainConfig tc;
  tc.epochs = section.epochs;
  tc.lr = section.lr;
  tc.sample_rate = section.sample_rate;
  tc.checkpoints = section.checkpoints;
  if (privacy) {
    PrivacyParams p;
    p.epsilon = privacy->epsilon;
    p.noise_multiplier = privacy->sigma;
    p.delta = privacy->delta;
    p.clip_norm = privacy->clip_norm;
    tc.privacy = p;
  }
  return tc;
}

std::optional<double> Sigma(const std::optional<PrivacyParams>& p) {
  if (!p) return std::nullopt;
  return p->noise_multiplier;
}

// Consecutive entries with equal (q, sigma) are merged into one phase.
json LedgerJson(const AccountantState& acc) {
  std::vector<LedgerEntry> phases;
  for (const LedgerEntry& e : acc.entries()) {
    if (!phases.empty() && phases.back().sample_rate == e.sample_rate &&
        phases.back().noise_multiplier == e.noise_multiplier) {
      phases.back().steps += e.steps;
    } else {
      phases.push_back(e);
    }
  }
  json out = json::array();
  for (const LedgerEntry& e : phases) {
    out.push_back({{"sample_rate", e.sample_rate},
                   {"noise_multiplier", e.noise_multiplier},
                   {"steps", e.steps}});
  }
  return out;
}

json PrivacyJson(const std::optional<PrivacyParams>& p,
                 const AccountantState& acc) {
  if (!p) return {{"private", false}};
  return {{"private", true},
          {"target_epsilon", p->epsilon ? json(*p->epsilon) : json(nullptr)},
          {"noise_multiplier", *p->noise_multiplier},
          {"clip_norm", p->clip_norm},
          {"delta", p->delta},
          {"epsilon", ConvertRdpToDp(acc, p->delta)},
          {"ledger", LedgerJson(acc)}};
}

json TrainJson(const TrainResult& tr, const ExperimentData& data) {
  return {{"train_accuracy", Accuracy(tr.state, data.train)},
          {"test_accuracy", Accuracy(tr.state, data.test)},
          {"epoch_losses", tr.epoch_losses},
          {"steps", tr.accountant.TotalSteps()},
          {"n_train", data.train.size()},
          {"n_test", data.test.size()},
          {"checkpoint_steps",
           [&] {
             json s = json::array();
             for (const Checkpoint& c : tr.checkpoints.checkpoints()) {
               s.push_back(c.step);
             }
             return s;
           }()},
          {"privacy", PrivacyJson(tr.privacy, tr.accountant)}};
}

// Probability that a random atypical sample outscores a random typical one;
// ties count half.
std::optional<double> AtypicalAuc(std::span<const double> scores,
                                  const Dataset& dataset) {
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    (dataset.samples[i].atypical ? pos : neg).push_back(scores[i]);
  }
  if (pos.empty() || neg.empty()) return std::nullopt;
  std::sort(neg.begin(), neg.end());
  double wins = 0.0;
  for (double p : pos) {
    auto lo = std::lower_bound(neg.begin(), neg.end(), p);
    auto hi = std::upper_bound(neg.begin(), neg.end(), p);
    wins += static_cast<double>(lo - neg.begin()) +
            0.5 * static_cast<double>(hi - lo);
  }
  return wins / (static_cast<double>(pos.size()) * neg.size());
}

json TopIds(std::span<const SampleId> ids, std::span<const double> scores,
            std::size_t k) {
  json out = json::array();
  for (std::size_t p : TopK(ids, scores, std::min(k, ids.size()))) {
    out.push_back(ids[p]);
  }
  return out;
}

json ScoreSummary(const ScoreTable& table, Metric m, const Dataset& dataset) {
  const std::vector<double>& raw = table.Raw(m);
  const double n = static_cast<double>(raw.size());
  const double mean = std::accumulate(raw.begin(), raw.end(), 0.0) / n;
  double var = 0.0;
  for (double v : raw) var += (v - mean) * (v - mean);
  json out = {{"raw_mean", mean},
              {"raw_std", std::sqrt(var / n)},
              {"raw_min", *std::min_element(raw.begin(), raw.end())},
              {"raw_max", *std::max_element(raw.begin(), raw.end())},
              {"top_ids", TopIds(table.ids, table.Normalized(m), kSummaryTopK)}};
  if (auto auc = AtypicalAuc(raw, dataset)) out["atypical_auc"] = *auc;
  return out;
}

ScoringOptions MakeScoringOptions(const ExperimentConfig& config,
                                  std::optional<double> sigma,
                                  std::vector<Metric> metrics) {
  ScoringOptions o;
  o.metrics = std::move(metrics);
  o.sigma = sigma;
  o.vog_literal = config.vog_literal;
  return o;
}

ModelState InitialModel(const ExperimentConfig& config, const Dataset& train,
                        const Seeds& seeds) {
  return InitModel(config.ResolveModel(train), seeds.init);
}

ReleasedScores ReleaseOne(const ScoreTable& table, Metric m,
                          const ReleaseSection& section, std::uint64_t seed,
                          ReleaseBudget& budget) {
  return ReleaseScores(table, m, section.clip_bound, section.epsilon, seed,
                       &budget, /*normalized=*/true);
}

json BudgetJson(const ReleaseBudget& budget) {
  json entries = json::array();
  for (const ReleaseEntry& e : budget.entries()) {
    entries.push_back({{"label", e.label},
                       {"mechanism", ToString(e.mechanism)},
                       {"epsilon", e.epsilon}});
  }
  return {{"total_epsilon", budget.Total()},
          {"cap", budget.cap() ? json(*budget.cap()) : json(nullptr)},
          {"entries", entries.size()}};
}

double TrainingEpsilon(const std::optional<PrivacyParams>& p,
                       const AccountantState& acc) {
  return p ? ConvertRdpToDp(acc, p->delta) : 0.0;
}

// Ids and values of a released table, or the normalized raw scores when the
// firewall is off.
std::vector<double> Downstream(const ReleasedScores& released,
                               const ScoreTable& table, Metric m,
                               const RunOptions& options) {
  if (options.released_only) return released.values;
  return table.Normalized(m);
}

}  // namespace

ExperimentConfig ApplyOverrides(ExperimentConfig config,
                                const std::string& command,
                                const Overrides& o) {
  if (o.seed) config.seed = *o.seed;
  if (o.vog_literal) config.vog_literal = true;
  if (o.epsilon) {
    if (command == "release") {
      config.release.epsilon = *o.epsilon;
    } else if (command == "compare") {
      throw ConfigError(
          "--epsilon does not apply to compare; set per-setting privacy");
    } else {
      PrivacyConfig p = config.train.privacy.value_or(PrivacyConfig{});
      p.epsilon = *o.epsilon;
      p.sigma.reset();
      config.train.privacy = p;
    }
  }
  if (o.metric) {
    if (command == "train") {
      throw ConfigError("--metric does not apply to train");
    }
    if (std::find(config.metrics.begin(), config.metrics.end(), *o.metric) ==
        config.metrics.end()) {
      config.metrics.push_back(*o.metric);
    }
    if (command == "score" || command == "compare") {
      config.metrics = {*o.metric};
      config.release.metrics = {*o.metric};
      config.prune.metrics.clear();
    } else if (command == "prune-retrain") {
      config.prune.metrics = {*o.metric};
    } else {
      config.release.metrics = {*o.metric};
    }
  }
  config.Validate();
  return config;
}

ExperimentData LoadExperimentData(const ExperimentConfig& config) {
  const DatasetConfig& d = config.dataset;
  const Seeds seeds(config.seed);
  Dataset all;
  switch (d.source) {
    case DatasetConfig::Source::kIdx:
      all = LoadIdx(d.images, d.labels);
      break;
    case DatasetConfig::Source::kCifarBin:
      all = LoadCifarBin(d.path);
      break;
    case DatasetConfig::Source::kSynthetic:
      all = SynthDataset(d.synthetic, d.synthetic_seed.value_or(config.seed));
      break;
  }
  if (d.subset) all = SubsetDataset(all, *d.subset, seeds.data);
  if (all.size() < 2) {
    throw ConfigError("dataset has " + std::to_string(all.size()) +
                      " samples; at least 2 are needed");
  }
  auto [train, test] = SplitTrainTest(all, d.test_fraction, seeds.data);
  if (train.empty() || test.empty()) {
    throw ConfigError("train/test split leaves an empty side");
  }
  return {std::move(train), std::move(test)};
}

RunOutput RunTrain(const ExperimentConfig& config, const RunOptions& options) {
  const Seeds seeds(config.seed);
  RunOutput out;
  out.report = NewReport("train", config, seeds);
  ExperimentData data =
      Stage("load", out.timings, [&] { return LoadExperimentData(config); });
  TrainResult tr = Stage("train", out.timings, [&] {
    return Train(InitialModel(config, data.train, seeds), data.train,
                 MakeTrainConfig(config.train, config.train.privacy),
                 seeds.train);
  });
  json results = {{"training", TrainJson(tr, data)}};
  if (const std::string path = SidePath(options, "model.fvck"); !path.empty()) {
    Stage("write", out.timings, [&] { SaveCheckpoint(tr.state, path); });
    results["model_path"] = "model.fvck";
  }
  out.report.results = results;
  AddWarnings(out.report, tr.warnings);
  return out;
}

RunOutput RunScore(const ExperimentConfig& config, const RunOptions& options) {
  const Seeds seeds(config.seed);
  RunOutput out;
  out.report = NewReport("score", config, seeds);
  ExperimentData data =
      Stage("load", out.timings, [&] { return LoadExperimentData(config); });
  TrainResult tr = Stage("train", out.timings, [&] {
    return Train(InitialModel(config, data.train, seeds), data.train,
                 MakeTrainConfig(config.train, config.train.privacy),
                 seeds.train);
  });
  ScoreTable table = Stage("score", out.timings, [&] {
    return ComputeScores(
        tr.state, tr.checkpoints, data.train,
        MakeScoringOptions(config, Sigma(tr.privacy), config.metrics));
  });
  json scores = json::object();
  for (Metric m : config.metrics) {
    scores[ToString(m)] = ScoreSummary(table, m, data.train);
  }
  json results = {{"training", TrainJson(tr, data)}, {"scores", scores}};
  if (const std::string path = SidePath(options, "scores.csv"); !path.empty()) {
    Stage("write", out.timings, [&] { table.WriteCsv(path); });
    results["scores_path"] = "scores.csv";
  }
  out.report.results = results;
  AddWarnings(out.report, tr.warnings);
  return out;
}

RunOutput RunRelease(const ExperimentConfig& config,
                     const RunOptions& options) {
  const Seeds seeds(config.seed);
  RunOutput out;
  out.report = NewReport("release", config, seeds);
  ExperimentData data =
      Stage("load", out.timings, [&] { return LoadExperimentData(config); });
  TrainResult tr = Stage("train", out.timings, [&] {
    return Train(InitialModel(config, data.train, seeds), data.train,
                 MakeTrainConfig(config.train, config.train.privacy),
                 seeds.train);
  });
  ScoreTable table = Stage("score", out.timings, [&] {
    return ComputeScores(
        tr.state, tr.checkpoints, data.train,
        MakeScoringOptions(config, Sigma(tr.privacy), config.metrics));
  });

  // Release stage: the only reader of raw scores once privacy matters.
  ReleaseBudget budget(config.release.budget_cap);
  std::map<Metric, ReleasedScores> released;
  std::map<Metric, double> variance;
  Stage("release", out.timings, [&] {
    for (Metric m : config.release.metrics) {
      released.emplace(m, ReleaseOne(table, m, config.release, seeds.release,
                                     budget));
      if (config.release.variance_epsilon) {
        Rng rng = MakeRng(seeds.release, "variance/" + ToString(m));
        variance[m] = DpVarianceQuery(table.Normalized(m),
                                      config.release.clip_bound,
                                      *config.release.variance_epsilon, rng,
                                      &budget, 0.5,
                                      "dp-variance/" + ToString(m));
      }
    }
  });
  if (options.after_release) options.after_release(table);

  json per_metric = json::object();
  Stage("analyze", out.timings, [&] {
    for (Metric m : config.release.metrics) {
      const ReleasedScores& rel = released.at(m);
      const std::string name = ToString(m);
      json entry = {
          {"n", rel.size()},
          {"epsilon_per_value", rel.epsilon_per_value},
          {"epsilon_total", rel.TotalEpsilon()},
          {"clip_bound", rel.clip_bound},
          {"seed_commitment", rel.seed_commitment},
          {"released_mean",
           std::accumulate(rel.values.begin(), rel.values.end(), 0.0) /
               static_cast<double>(rel.size())},
          {"released_top_ids", TopIds(rel.ids, rel.values, kSummaryTopK)}};
      if (variance.count(m)) entry["dp_variance"] = variance.at(m);
      if (const std::string path =
              SidePath(options, "released_" + name + ".csv");
          !path.empty()) {
        rel.WriteCsv(path);
        entry["released_path"] = "released_" + name + ".csv";
      }
      if (!options.released_only) {
        // Diagnostics against the raw table; absent behind the firewall.
        const std::vector<double>& norm = table.Normalized(m);
        double max_delta = 0.0;
        for (std::size_t i = 0; i < norm.size(); ++i) {
          max_delta = std::max(max_delta, std::abs(rel.values[i] - norm[i]));
        }
        const std::size_t k = std::min(kSummaryTopK, norm.size());
        entry["max_abs_delta_vs_raw"] = max_delta;
        entry["topk_overlap_vs_raw"] =
            TopkOverlap(rel.ids, rel.values, norm, k);
      }
      per_metric[name] = entry;
    }
  });
  json results = {{"training", TrainJson(tr, data)},
                  {"released", per_metric},
                  {"budget", BudgetJson(budget)},
                  {"released_only", options.released_only}};
  if (options.compose_with_training) {
    const double train_eps = TrainingEpsilon(tr.privacy, tr.accountant);
    results["composition"] = {
        {"training_epsilon", train_eps},
        {"release_epsilon", budget.Total()},
        {"total_epsilon_upper_bound", train_eps + budget.Total()},
        {"rule", "basic sequential composition"}};
  }
  out.report.results = results;
  AddWarnings(out.report, tr.warnings);
  return out;
}

RunOutput RunPruneRetrain(const ExperimentConfig& config,
                          const RunOptions& options) {
  const Seeds seeds(config.seed);
  RunOutput out;
  out.report = NewReport("prune-retrain", config, seeds);
  ExperimentData data =
      Stage("load", out.timings, [&] { return LoadExperimentData(config); });
  const PruneSection& prune = config.prune;
  const std::vector<Metric> removal_metrics =
      prune.metrics.empty() ? config.metrics : prune.metrics;

  const std::size_t n1 = data.train.size();
  const std::size_t n_remove = static_cast<std::size_t>(
      std::llround(prune.fraction * static_cast<double>(n1)));
  const std::size_t n2 = n1 - n_remove;
  if (n2 == 0) throw ConfigError("pruning removes every training sample");

  TrainConfig phase1 = MakeTrainConfig(config.train, config.train.privacy);
  phase1.epochs = prune.warmup_epochs;
  // The expected batch size stays fixed, so q grows as the dataset shrinks.
  TrainConfig phase2 = phase1;
  phase2.epochs = prune.retrain_epochs;
  phase2.sample_rate =
      std::min(1.0, phase1.sample_rate * static_cast<double>(n1) /
                        static_cast<double>(n2));

  std::vector<std::string> warnings;
  std::optional<PrivacyParams> privacy;
  if (phase1.privacy) {
    // One ledger over both phases, each with its own sampling rate.
    const SchedulePhase schedule[2] = {
        {phase1.sample_rate, phase1.TotalSteps()},
        {phase2.sample_rate, phase2.epochs == 0 ? 0 : phase2.TotalSteps()}};
    privacy = Stage("calibrate", out.timings, [&] {
      return ResolvePrivacy(*phase1.privacy, n1, schedule, &warnings);
    });
    phase1.privacy = privacy;
    phase2.privacy = privacy;
  }

  TrainResult warm = Stage("warmup", out.timings, [&] {
    return Train(InitialModel(config, data.train, seeds), data.train, phase1,
                 seeds.train);
  });
  ScoreTable table = Stage("score", out.timings, [&] {
    return ComputeScores(
        warm.state, warm.checkpoints, data.train,
        MakeScoringOptions(config, Sigma(warm.privacy), config.metrics));
  });

  // Removal rankings, keyed by variant name.
  std::vector<std::pair<std::string, std::vector<double>>> rankings;
  for (Metric m : removal_metrics) {
    rankings.emplace_back(ToString(m), table.Normalized(m));
  }
  Rng control_rng = MakeRng(config.seed, "prune/control");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> coin(n1);
  for (double& u : coin) u = unit(control_rng);
  if (prune.random_control) rankings.emplace_back("random", coin);
  const bool has_atypical =
      std::any_of(data.train.samples.begin(), data.train.samples.end(),
                  [](const Sample& s) { return s.atypical; });
  if (prune.atypical_control && has_atypical) {
    std::vector<double> truth(n1);
    for (std::size_t i = 0; i < n1; ++i) {
      truth[i] = (data.train.samples[i].atypical ? 1.0 : 0.0) + coin[i];
    }
    rankings.emplace_back("atypical", truth);
  }
  rankings.emplace_back("none", std::vector<double>{});
  const bool has_mislabeled =
      std::any_of(data.train.samples.begin(), data.train.samples.end(),
                  [](const Sample& s) { return s.mislabeled; });

  const std::uint64_t retrain_seed = DeriveSeed(config.seed, "retrain");
  json variants = json::object();
  double combined_epsilon = 0.0;
  for (const auto& [name, scores] : rankings) {
    std::vector<bool> removed(n1, false);
    std::size_t removed_atypical = 0;
    std::size_t removed_mislabeled = 0;
    Dataset remainder;
    if (name == "none") {
      remainder = data.train;
    } else {
      if (n_remove > 0) {
        for (std::size_t p : TopK(table.ids, scores, n_remove)) {
          removed[p] = true;
          removed_atypical += data.train.samples[p].atypical ? 1 : 0;
          removed_mislabeled += data.train.samples[p].mislabeled ? 1 : 0;
        }
      }
      std::vector<std::size_t> keep;
      for (std::size_t i = 0; i < n1; ++i) {
        if (!removed[i]) keep.push_back(i);
      }
      remainder = data.train.Select(keep);
    }
    TrainConfig cfg = phase2;
    if (name == "none") cfg.sample_rate = phase1.sample_rate;
    ModelState state = warm.state;
    AccountantState ledger = warm.accountant;
    std::vector<double> losses;
    Stage("retrain", out.timings, [&] {
      if (cfg.epochs == 0) return;
      std::optional<PrivacyParams> p = privacy;
      if (p) p->sample_rate = cfg.sample_rate;
      Trainer trainer(state, remainder, cfg, retrain_seed, p);
      for (std::size_t e = 0; e < cfg.epochs; ++e) {
        double total = 0.0;
        for (std::uint64_t t = 0; t < cfg.StepsPerEpoch(); ++t) {
          total += trainer.Step();
        }
        losses.push_back(total / static_cast<double>(cfg.StepsPerEpoch()));
      }
      state = trainer.state();
      for (const LedgerEntry& e : trainer.accountant().entries()) {
        ledger.Record(e.sample_rate, e.noise_multiplier, e.steps);
      }
    });
    json v = {{"removed", name == "none" ? 0 : n_remove},
              {"n_retrain", remainder.size()},
              {"test_accuracy", Accuracy(state, data.test)},
              {"epoch_losses", losses}};
    if (has_atypical) v["removed_atypical"] = removed_atypical;
    if (has_mislabeled) v["removed_mislabeled"] = removed_mislabeled;
    if (privacy) {
      v["epsilon"] = ConvertRdpToDp(ledger, privacy->delta);
      v["ledger"] = LedgerJson(ledger);
      if (name != "none") combined_epsilon = ConvertRdpToDp(ledger, privacy->delta);
    }
    variants[name] = v;
  }

  json metrics = json::object();
  for (Metric m : config.metrics) {
    metrics[ToString(m)] = ScoreSummary(table, m, data.train);
  }
  json results = {
      {"warmup", TrainJson(warm, data)},
      {"fraction", prune.fraction},
      {"n_removed", n_remove},
      {"sample_rate_phase1", phase1.sample_rate},
      {"sample_rate_phase2", phase2.sample_rate},
      {"scores", metrics},
      {"variants", variants}};
  if (privacy) {
    results["combined_epsilon"] = combined_epsilon;
    results["noise_multiplier"] = *privacy->noise_multiplier;
  }
  if (const std::string path = SidePath(options, "scores.csv"); !path.empty()) {
    Stage("write", out.timings, [&] { table.WriteCsv(path); });
    results["scores_path"] = "scores.csv";
  }
  out.report.results = results;
  AddWarnings(out.report, warnings);
  AddWarnings(out.report, warm.warnings);
  return out;
}

RunOutput RunFederate(const ExperimentConfig& config,
                      const RunOptions& options) {
  const Seeds seeds(config.seed);
  RunOutput out;
  out.report = NewReport("federate", config, seeds);
  out.report.seeds["partition"] = DeriveSeed(config.seed, "partition");
  out.report.seeds["federation"] = DeriveSeed(config.seed, "federation");
  ExperimentData data =
      Stage("load", out.timings, [&] { return LoadExperimentData(config); });
  const FederationSection& fed = config.federation;
  const PartitionStrategy strategy =
      fed.strategy == "iid" ? PartitionStrategy::Iid()
                            : PartitionStrategy::Dirichlet(fed.alpha);
  ClientPartition partition = Stage("partition", out.timings, [&] {
    return PartitionDataset(data.train, fed.clients, strategy,
                            DeriveSeed(config.seed, "partition"));
  });
  FederatedConfig fc;
  fc.rounds = fed.rounds;
  fc.local_epochs = fed.local_epochs;
  fc.local = MakeTrainConfig(config.train, config.train.privacy);
  FederatedResult fr = Stage("federated-train", out.timings, [&] {
    return FederatedTrain(InitialModel(config, data.train, seeds), data.train,
                          partition, fc, DeriveSeed(config.seed, "federation"));
  });

  const Metric reward_metric = config.release.metrics.front();
  ReleasedScores all;
  all.metric = reward_metric;
  all.clip_bound = config.release.clip_bound;
  all.epsilon_per_value = config.release.epsilon;
  all.seed_commitment = DeriveSeed(seeds.release, "release-commitment");
  std::vector<double> raw_sums(partition.num_clients(), 0.0);
  ReleaseBudget budget(config.release.budget_cap);
  for (std::size_t c = 0; c < partition.num_clients(); ++c) {
    if (partition.positions[c].empty()) continue;
    const Dataset local = data.train.Select(partition.positions[c]);
    // Each client scores and normalizes its own data against the shared
    // global trajectory.
    ScoreTable table = Stage("score", out.timings, [&] {
      return ComputeScores(
          fr.global, fr.checkpoints, local,
          MakeScoringOptions(config, Sigma(fr.client_privacy[c]),
                             {reward_metric}));
    });
    ReleasedScores rel = Stage("release", out.timings, [&] {
      return ReleaseOne(table, reward_metric, config.release,
                        DeriveSeed(seeds.release, "client/" + std::to_string(c)),
                        budget);
    });
    if (options.after_release) options.after_release(table);
    all.ids.insert(all.ids.end(), rel.ids.begin(), rel.ids.end());
    all.values.insert(all.values.end(), rel.values.begin(), rel.values.end());
    if (!options.released_only) {
      const std::vector<double>& norm = table.Normalized(reward_metric);
      raw_sums[c] = std::accumulate(norm.begin(), norm.end(), 0.0);
    }
  }
  std::vector<ClientReport> reports = Stage("rewards", out.timings, [&] {
    return AllocateRewards(all, partition, fed.reward_pool);
  });

  json clients = json::array();
  for (const ClientReport& r : reports) {
    const std::size_t c = r.client_id;
    json entry = {{"client_id", c},
                  {"n_samples", r.n_samples},
                  {"score_sum_released", r.score_sum_released},
                  {"reward", r.reward},
                  {"release_epsilon", r.epsilon_spent},
                  {"privacy", PrivacyJson(fr.client_privacy[c],
                                          fr.client_accountants[c])}};
    if (!options.released_only) entry["score_sum_raw"] = raw_sums[c];
    if (options.compose_with_training) {
      const double train_eps =
          TrainingEpsilon(fr.client_privacy[c], fr.client_accountants[c]);
      entry["composition"] = {
          {"training_epsilon", train_eps},
          {"release_epsilon", r.epsilon_spent},
          {"total_epsilon_upper_bound", train_eps + r.epsilon_spent},
          {"rule", "basic sequential composition"}};
    }
    clients.push_back(entry);
  }
  json results = {
      {"strategy", partition.strategy},
      {"rounds", fed.rounds},
      {"local_epochs", fed.local_epochs},
      {"test_accuracy", Accuracy(fr.global, data.test)},
      {"train_accuracy", Accuracy(fr.global, data.train)},
      {"reward_metric", ToString(reward_metric)},
      {"reward_pool", fed.reward_pool},
      {"clients", clients},
      {"budget", BudgetJson(budget)},
      {"released_only", options.released_only}};
  if (const std::string path = SidePath(options, "clients.csv"); !path.empty()) {
    Stage("write", out.timings, [&] {
      WriteClientReportsCsv(reports, path);
      all.WriteCsv(SidePath(options, "released_" + ToString(reward_metric) +
                                         ".csv"));
    });
    results["clients_path"] = "clients.csv";
  }
  out.report.results = results;
  AddWarnings(out.report, fr.warnings);
  return out;
}

RunOutput RunCompare(const ExperimentConfig& config,
                     const RunOptions& options) {
  const Seeds seeds(config.seed);
  RunOutput out;
  out.report = NewReport("compare", config, seeds);
  const CompareSection& cmp = config.compare;
  if (cmp.settings.size() < 2) {
    throw ConfigError("compare needs at least two settings");
  }
  ExperimentData data =
      Stage("load", out.timings, [&] { return LoadExperimentData(config); });
  const ModelState initial = InitialModel(config, data.train, seeds);

  struct SettingRun {
    TrainResult train;
    std::map<Metric, std::vector<double>> downstream;
  };
  std::vector<SettingRun> runs;
  json settings = json::object();
  ReleaseBudget budget(config.release.budget_cap);
  for (const CompareSetting& s : cmp.settings) {
    SettingRun run;
    // Shared initialization; each setting is an independent training run.
    const std::uint64_t seed =
        s.seed.value_or(DeriveSeed(config.seed, "setting/" + s.name));
    out.report.seeds["settings"][s.name] = seed;
    run.train = Stage("train/" + s.name, out.timings, [&] {
      return Train(initial, data.train, MakeTrainConfig(config.train, s.privacy),
                   seed);
    });
    ScoreTable table = Stage("score/" + s.name, out.timings, [&] {
      return ComputeScores(run.train.state, run.train.checkpoints, data.train,
                           MakeScoringOptions(config, Sigma(run.train.privacy),
                                              config.metrics));
    });
    json entry = TrainJson(run.train, data);
    if (options.released_only) {
      std::map<Metric, ReleasedScores> released;
      Stage("release/" + s.name, out.timings, [&] {
        for (Metric m : config.metrics) {
          released.emplace(
              m, ReleaseOne(table, m, config.release,
                            DeriveSeed(seeds.release, "setting/" + s.name),
                            budget));
        }
      });
      if (options.after_release) options.after_release(table);
      for (auto& [m, rel] : released) {
        run.downstream[m] = Downstream(rel, table, m, options);
      }
    } else {
      for (Metric m : config.metrics) run.downstream[m] = table.Normalized(m);
      json summary = json::object();
      for (Metric m : config.metrics) {
        summary[ToString(m)] = ScoreSummary(table, m, data.train);
      }
      entry["scores"] = summary;
    }
    if (const std::string path = SidePath(options, "scores_" + s.name + ".csv");
        !path.empty() && !options.released_only) {
      table.WriteCsv(path);
      entry["scores_path"] = "scores_" + s.name + ".csv";
    }
    settings[s.name] = entry;
    runs.push_back(std::move(run));
  }

  json comparisons = json::array();
  Stage("compare", out.timings, [&] {
    std::vector<SampleId> ids;
    for (const Sample& s : data.train.samples) ids.push_back(s.id);
    const std::size_t k = std::min(cmp.k, ids.size());
    for (std::size_t a = 0; a < runs.size(); ++a) {
      for (std::size_t b = a + 1; b < runs.size(); ++b) {
        for (Metric m : config.metrics) {
          SelectionComparison sc = CompareSelections(
              data.train, ids, runs[a].downstream.at(m),
              runs[b].downstream.at(m), k, cmp.pairing);
          sc.setting_a = cmp.settings[a].name;
          sc.setting_b = cmp.settings[b].name;
          sc.metric = ToString(m);
          comparisons.push_back(sc.ToJson());
        }
      }
    }
  });
  json results = {{"settings", settings},
                  {"comparisons", comparisons},
                  {"released_only", options.released_only}};
  if (options.released_only) results["budget"] = BudgetJson(budget);
  out.report.results = results;
  for (const SettingRun& r : runs) AddWarnings(out.report, r.train.warnings);
  return out;
}

RunOutput RunCommand(const std::string& command,
                     const ExperimentConfig& config,
                     const RunOptions& options) {
  if (command == "train") return RunTrain(config, options);
  if (command == "score") return RunScore(config, options);
  if (command == "release") return RunRelease(config, options);
  if (command == "prune-retrain") return RunPruneRetrain(config, options);
  if (command == "federate") return RunFederate(config, options);
  if (command == "compare") return RunCompare(config, options);
  throw ConfigError("unknown command '" + command + "'");
}

}  // namespace fedval
