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
// fedval: private data valuation experiments from the command line.
//
//   fedval <train|score|release|prune-retrain|federate|compare>
//          --config exp.json [--seed N] [--out DIR] [--epsilon E]
//          [--metric vog|plis|loss|gradnorm] [--vog-literal]
//          [--released-only] [--compose-with-training]
//
// Writes DIR/report.json (canonical, byte-stable) and DIR/timings.json.
// Exit codes: 0 success, 2 configuration error, 3 runtime error.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <string>

#include "CLI11.hpp"
#include "fedval/pipeline/config.h"
#include "fedval/pipeline/pipeline.h"
#include "fedval/pipeline/report.h"
#include "fedval/util/alloc.h"
#include "fedval/util/errors.h"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Flags {
  std::string config;
  std::string out = "fedval_out";
  std::uint64_t seed = 0;
  double epsilon = 0.0;
  std::string metric;
  bool vog_literal = false;
  bool released_only = false;
  bool compose = false;
};

void AddFlags(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "Experiment config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--seed", f.seed, "Master seed; overrides the config");
  sub->add_option("--out", f.out, "Output directory")->capture_default_str();
  sub->add_option("--epsilon", f.epsilon,
                  "Training target epsilon (release: per-value epsilon)");
  sub->add_option("--metric", f.metric, "Restrict to one metric")
      ->check(CLI::IsMember({"vog", "plis", "loss", "gradnorm"}));
  sub->add_flag("--vog-literal", f.vog_literal,
                "VoG as sqrt(1/K) * sum of squared deviations");
  sub->add_flag("--released-only", f.released_only,
                "Stages after release read released scores only");
  sub->add_flag("--compose-with-training", f.compose,
                "Report training + release epsilon");
}

int Run(const std::string& command, const Flags& f, const CLI::App& sub) {
  fedval::Overrides overrides;
  if (sub.count("--seed") > 0) overrides.seed = f.seed;
  if (sub.count("--epsilon") > 0) overrides.epsilon = f.epsilon;
  if (!f.metric.empty()) overrides.metric = fedval::MetricFromString(f.metric);
  overrides.vog_literal = f.vog_literal;
  const fedval::ExperimentConfig config = fedval::ApplyOverrides(
      fedval::ExperimentConfig::Load(f.config), command, overrides);

  fedval::RunOptions options;
  options.out_dir = f.out;
  options.released_only = f.released_only;
  options.compose_with_training = f.compose;
  std::filesystem::create_directories(f.out);
  fedval::RunOutput out = fedval::RunCommand(command, config, options);

  const std::string report_path =
      (std::filesystem::path(f.out) / "report.json").string();
  fedval::EmitReport(out.report, report_path);
  const std::string timings_path =
      (std::filesystem::path(f.out) / "timings.json").string();
  std::ofstream timings(timings_path);
  if (!timings) throw fedval::IoError("cannot write '" + timings_path + "'");
  timings << out.timings.dump(2) << "\n";
  for (const std::string& w : out.report.warnings) {
    std::fprintf(stderr, "warning: %s\n", w.c_str());
  }
  std::printf("%s: wrote %s (config %s)\n", command.c_str(),
              report_path.c_str(), out.report.config_hash.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  fedval::ConfigureAllocator();
  CLI::App app{"Private data valuation experiments"};
  app.require_subcommand(1);
  Flags flags;
  const char* kCommands[][2] = {
      {"train", "Train a model and report accuracy and privacy"},
      {"score", "Train, then compute per-sample scores"},
      {"release", "Train, score and release scores under DP"},
      {"prune-retrain", "Warm up, prune by score, retrain"},
      {"federate", "Federated training with released-score rewards"},
      {"compare", "Compare score selections across privacy settings"},
  };
  for (const auto& [name, help] : kCommands) {
    AddFlags(app.add_subcommand(name, help), flags);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  const CLI::App* sub = app.get_subcommands().front();
  try {
    return Run(sub->get_name(), flags, *sub);
  } catch (const fedval::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
}
