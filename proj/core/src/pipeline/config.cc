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
#include "fedval/pipeline/config.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fedval/pipeline/report.h"
#include "fedval/util/errors.h"
#include "fedval/util/json_util.h"

namespace fedval {

using nlohmann::json;

namespace {

void RequireFile(const std::string& path, const std::string& context) {
  if (path.empty()) throw ConfigError(context + ": path is empty");
  if (!std::filesystem::is_regular_file(path)) {
    throw ConfigError(context + ": file '" + path + "' does not exist");
  }
}

void RequirePositive(double v, const std::string& what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ConfigError(what + " must be positive and finite");
  }
}

std::vector<Metric> ParseMetrics(const json& j, const std::string& context) {
  if (!j.is_array()) throw ConfigError(context + ": expected a list of metrics");
  std::vector<Metric> out;
  for (const json& m : j) {
    if (!m.is_string()) throw ConfigError(context + ": metric names are strings");
    Metric metric;
    try {
      metric = MetricFromString(m.get<std::string>());
    } catch (const ConfigError& e) {
      throw ConfigError(context + ": " + e.what());
    }
    for (Metric seen : out) {
      if (seen == metric) {
        throw ConfigError(context + ": duplicate metric '" + ToString(metric) +
                          "'");
      }
    }
    out.push_back(metric);
  }
  return out;
}

json MetricsToJson(const std::vector<Metric>& metrics) {
  json out = json::array();
  for (Metric m : metrics) out.push_back(ToString(m));
  return out;
}

template <typename T>
std::optional<T> GetOptional(const json& j, const char* key,
                             std::string_view context) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return GetRequired<T>(j, key, context);
}

template <typename T>
json Optional(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

SynthSpec ParseSynth(const json& j) {
  constexpr std::string_view kCtx = "dataset.synthetic";
  RequireObject(j, kCtx);
  CheckKeys(j,
            {"n", "classes", "image_size", "channels", "atypical_fraction",
             "blob_sigma", "jitter", "noise", "atypical_shift",
             "atypical_contrast", "min_center_distance", "label_noise"},
            kCtx);
  SynthSpec s;
  s.n = GetOr(j, "n", s.n, kCtx);
  s.classes = GetOr(j, "classes", s.classes, kCtx);
  s.image_size = GetOr(j, "image_size", s.image_size, kCtx);
  s.channels = GetOr(j, "channels", s.channels, kCtx);
  s.atypical_fraction = GetOr(j, "atypical_fraction", s.atypical_fraction, kCtx);
  s.blob_sigma = GetOr(j, "blob_sigma", s.blob_sigma, kCtx);
  s.jitter = GetOr(j, "jitter", s.jitter, kCtx);
  s.noise = GetOr(j, "noise", s.noise, kCtx);
  s.atypical_shift = GetOr(j, "atypical_shift", s.atypical_shift, kCtx);
  s.atypical_contrast = GetOr(j, "atypical_contrast", s.atypical_contrast, kCtx);
  s.min_center_distance =
      GetOr(j, "min_center_distance", s.min_center_distance, kCtx);
  s.label_noise = GetOr(j, "label_noise", s.label_noise, kCtx);
  return s;
}

json SynthToJson(const SynthSpec& s) {
  return {{"n", s.n},
          {"classes", s.classes},
          {"image_size", s.image_size},
          {"channels", s.channels},
          {"atypical_fraction", s.atypical_fraction},
          {"blob_sigma", s.blob_sigma},
          {"jitter", s.jitter},
          {"noise", s.noise},
          {"atypical_shift", s.atypical_shift},
          {"atypical_contrast", s.atypical_contrast},
          {"min_center_distance", s.min_center_distance},
          {"label_noise", s.label_noise}};
}

DatasetConfig ParseDataset(const json& j) {
  constexpr std::string_view kCtx = "dataset";
  RequireObject(j, kCtx);
  CheckKeys(j,
            {"source", "images", "labels", "path", "synthetic", "synthetic_seed",
             "subset", "test_fraction"},
            kCtx);
  DatasetConfig d;
  const auto source = GetRequired<std::string>(j, "source", kCtx);
  const std::vector<std::string_view> foreign =
      source == "idx"         ? std::vector<std::string_view>{"path", "synthetic", "synthetic_seed"}
      : source == "cifar-bin" ? std::vector<std::string_view>{"images", "labels", "synthetic", "synthetic_seed"}
                              : std::vector<std::string_view>{"images", "labels", "path"};
  for (std::string_view key : foreign) {
    if (j.contains(key)) {
      throw ConfigError("dataset." + std::string(key) +
                        " does not apply to source '" + source + "'");
    }
  }
  if (source == "idx") {
    d.source = DatasetConfig::Source::kIdx;
    d.images = GetRequired<std::string>(j, "images", kCtx);
    d.labels = GetRequired<std::string>(j, "labels", kCtx);
  } else if (source == "cifar-bin") {
    d.source = DatasetConfig::Source::kCifarBin;
    d.path = GetRequired<std::string>(j, "path", kCtx);
  } else if (source == "synthetic") {
    d.source = DatasetConfig::Source::kSynthetic;
    d.synthetic = ParseSynth(j.value("synthetic", json::object()));
    d.synthetic_seed =
        GetOptional<std::uint64_t>(j, "synthetic_seed", kCtx);
  } else {
    throw ConfigError("dataset.source: unknown source '" + source +
                      "' (expected idx, cifar-bin or synthetic)");
  }
  d.subset = GetOptional<std::size_t>(j, "subset", kCtx);
  d.test_fraction = GetOr(j, "test_fraction", d.test_fraction, kCtx);
  return d;
}

json DatasetToJson(const DatasetConfig& d) {
  json j;
  switch (d.source) {
    case DatasetConfig::Source::kIdx:
      j = {{"source", "idx"}, {"images", d.images}, {"labels", d.labels}};
      break;
    case DatasetConfig::Source::kCifarBin:
      j = {{"source", "cifar-bin"}, {"path", d.path}};
      break;
    case DatasetConfig::Source::kSynthetic:
      j = {{"source", "synthetic"},
           {"synthetic", SynthToJson(d.synthetic)},
           {"synthetic_seed", Optional(d.synthetic_seed)}};
      break;
  }
  j["subset"] = Optional(d.subset);
  j["test_fraction"] = d.test_fraction;
  return j;
}

std::optional<PrivacyConfig> ParseOptionalPrivacy(const json& parent,
                                                  const std::string& context) {
  auto it = parent.find("privacy");
  if (it == parent.end() || it->is_null()) return std::nullopt;
  return ParsePrivacy(*it, context + ".privacy");
}

// Input shape of the configured source, from the IDX header if needed.
Shape InputShapeOf(const DatasetConfig& d) {
  switch (d.source) {
    case DatasetConfig::Source::kCifarBin:
      return {3, 32, 32};
    case DatasetConfig::Source::kSynthetic:
      return {d.synthetic.channels, d.synthetic.image_size,
              d.synthetic.image_size};
    case DatasetConfig::Source::kIdx:
      break;
  }
  std::ifstream in(d.images, std::ios::binary);
  unsigned char h[16] = {};
  if (!in.read(reinterpret_cast<char*>(h), sizeof(h))) {
    throw ConfigError("dataset.images: '" + d.images +
                      "' is too short for an IDX header");
  }
  auto be = [&](int o) {
    return (std::size_t{h[o]} << 24) | (std::size_t{h[o + 1]} << 16) |
           (std::size_t{h[o + 2]} << 8) | std::size_t{h[o + 3]};
  };
  return {1, be(8), be(12)};
}

}  // namespace

PrivacyConfig ParsePrivacy(const json& j, const std::string& context) {
  RequireObject(j, context);
  CheckKeys(j, {"epsilon", "sigma", "delta", "clip_norm"}, context);
  PrivacyConfig p;
  p.epsilon = GetOptional<double>(j, "epsilon", context);
  p.sigma = GetOptional<double>(j, "sigma", context);
  p.delta = GetOr(j, "delta", p.delta, context);
  p.clip_norm = GetOr(j, "clip_norm", p.clip_norm, context);
  if (!p.epsilon && !p.sigma) {
    throw ConfigError(context + ": set epsilon or sigma");
  }
  if (p.epsilon) RequirePositive(*p.epsilon, context + ".epsilon");
  if (p.sigma) RequirePositive(*p.sigma, context + ".sigma");
  if (!(p.delta > 0.0 && p.delta < 1.0)) {
    throw ConfigError(context + ".delta must lie in (0, 1)");
  }
  RequirePositive(p.clip_norm, context + ".clip_norm");
  return p;
}

json PrivacyToJson(const std::optional<PrivacyConfig>& p) {
  if (!p) return nullptr;
  return {{"epsilon", Optional(p->epsilon)},
          {"sigma", Optional(p->sigma)},
          {"delta", p->delta},
          {"clip_norm", p->clip_norm}};
}

ExperimentConfig ExperimentConfig::FromJson(const json& j) {
  RequireObject(j, "config");
  CheckKeys(j,
            {"seed", "dataset", "model", "train", "metrics", "vog_literal",
             "prune", "release", "federation", "compare"},
            "config");
  ExperimentConfig c;
  c.seed = GetOr<std::uint64_t>(j, "seed", 0, "config");
  c.dataset = ParseDataset(GetRequired<json>(j, "dataset", "config"));
  if (j.contains("model")) {
    c.model = j.at("model");
    RequireObject(c.model, "model");
    if (c.model.contains("input_shape") || c.model.contains("num_classes")) {
      throw ConfigError(
          "model: input_shape and num_classes come from the dataset");
    }
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    constexpr std::string_view kCtx = "train";
    RequireObject(t, kCtx);
    CheckKeys(t, {"epochs", "lr", "sample_rate", "checkpoints", "privacy"},
              kCtx);
    c.train.epochs = GetOr(t, "epochs", c.train.epochs, kCtx);
    c.train.lr = GetOr(t, "lr", c.train.lr, kCtx);
    c.train.sample_rate = GetOr(t, "sample_rate", c.train.sample_rate, kCtx);
    c.train.checkpoints = GetOr(t, "checkpoints", c.train.checkpoints, kCtx);
    c.train.privacy = ParseOptionalPrivacy(t, "train");
  }
  if (j.contains("metrics")) c.metrics = ParseMetrics(j.at("metrics"), "metrics");
  c.vog_literal = GetOr(j, "vog_literal", false, "config");
  if (j.contains("prune")) {
    const json& p = j.at("prune");
    constexpr std::string_view kCtx = "prune";
    RequireObject(p, kCtx);
    CheckKeys(p,
              {"fraction", "warmup_epochs", "retrain_epochs", "metrics",
               "random_control", "atypical_control"},
              kCtx);
    c.prune.fraction = GetOr(p, "fraction", c.prune.fraction, kCtx);
    c.prune.warmup_epochs = GetOr(p, "warmup_epochs", c.prune.warmup_epochs, kCtx);
    c.prune.retrain_epochs =
        GetOr(p, "retrain_epochs", c.prune.retrain_epochs, kCtx);
    if (p.contains("metrics")) {
      c.prune.metrics = ParseMetrics(p.at("metrics"), "prune.metrics");
    }
    c.prune.random_control = GetOr(p, "random_control", true, kCtx);
    c.prune.atypical_control = GetOr(p, "atypical_control", true, kCtx);
  }
  if (j.contains("release")) {
    const json& r = j.at("release");
    constexpr std::string_view kCtx = "release";
    RequireObject(r, kCtx);
    CheckKeys(r,
              {"epsilon", "clip_bound", "budget_cap", "metrics",
               "variance_epsilon"},
              kCtx);
    c.release.epsilon = GetOr(r, "epsilon", c.release.epsilon, kCtx);
    c.release.clip_bound = GetOr(r, "clip_bound", c.release.clip_bound, kCtx);
    c.release.budget_cap =
        GetOptional<double>(r, "budget_cap", kCtx);
    if (r.contains("metrics")) {
      c.release.metrics = ParseMetrics(r.at("metrics"), "release.metrics");
    }
    c.release.variance_epsilon =
        GetOptional<double>(r, "variance_epsilon", kCtx);
  }
  if (j.contains("federation")) {
    const json& f = j.at("federation");
    constexpr std::string_view kCtx = "federation";
    RequireObject(f, kCtx);
    CheckKeys(f,
              {"clients", "strategy", "alpha", "rounds", "local_epochs",
               "reward_pool"},
              kCtx);
    c.federation.clients = GetOr(f, "clients", c.federation.clients, kCtx);
    c.federation.strategy = GetOr(f, "strategy", c.federation.strategy, kCtx);
    c.federation.alpha = GetOr(f, "alpha", c.federation.alpha, kCtx);
    c.federation.rounds = GetOr(f, "rounds", c.federation.rounds, kCtx);
    c.federation.local_epochs =
        GetOr(f, "local_epochs", c.federation.local_epochs, kCtx);
    c.federation.reward_pool =
        GetOr(f, "reward_pool", c.federation.reward_pool, kCtx);
  }
  if (j.contains("compare")) {
    const json& cmp = j.at("compare");
    constexpr std::string_view kCtx = "compare";
    RequireObject(cmp, kCtx);
    CheckKeys(cmp, {"settings", "k", "pairing"}, kCtx);
    for (const json& s : GetOr(cmp, "settings", json::array(), kCtx)) {
      RequireObject(s, "compare.settings[]");
      CheckKeys(s, {"name", "privacy", "seed"}, "compare.settings[]");
      c.compare.settings.push_back(
          {GetRequired<std::string>(s, "name", "compare.settings[]"),
           ParseOptionalPrivacy(s, "compare.settings[]"),
           GetOptional<std::uint64_t>(s, "seed", "compare.settings[]")});
    }
    c.compare.k = GetOr(cmp, "k", c.compare.k, kCtx);
    c.compare.pairing =
        PairingFromString(GetOr<std::string>(cmp, "pairing", "rank-aligned", kCtx));
  }
  c.Validate();
  return c;
}

ExperimentConfig ExperimentConfig::Load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return FromJson(j);
}

void ExperimentConfig::Validate() const {
  switch (dataset.source) {
    case DatasetConfig::Source::kIdx:
      RequireFile(dataset.images, "dataset.images");
      RequireFile(dataset.labels, "dataset.labels");
      break;
    case DatasetConfig::Source::kCifarBin:
      RequireFile(dataset.path, "dataset.path");
      break;
    case DatasetConfig::Source::kSynthetic:
      if (dataset.synthetic.classes < 2) {
        throw ConfigError("dataset.synthetic.classes must be >= 2");
      }
      if (dataset.synthetic.n == 0) {
        throw ConfigError("dataset.synthetic.n must be positive");
      }
      if (!(dataset.synthetic.atypical_fraction >= 0.0 &&
            dataset.synthetic.atypical_fraction <= 1.0)) {
        throw ConfigError("dataset.synthetic.atypical_fraction must lie in [0, 1]");
      }
      if (!(dataset.synthetic.label_noise >= 0.0 &&
            dataset.synthetic.label_noise <= 1.0)) {
        throw ConfigError("dataset.synthetic.label_noise must lie in [0, 1]");
      }
      break;
  }
  if (!(dataset.test_fraction > 0.0 && dataset.test_fraction < 1.0)) {
    throw ConfigError("dataset.test_fraction must lie in (0, 1)");
  }
  if (train.epochs == 0) throw ConfigError("train.epochs must be positive");
  RequirePositive(train.lr, "train.lr");
  if (!(train.sample_rate > 0.0 && train.sample_rate <= 1.0)) {
    throw ConfigError("train.sample_rate must lie in (0, 1]");
  }
  if (train.checkpoints < 2) {
    throw ConfigError("train.checkpoints must be >= 2 (VoG needs a trace)");
  }
  if (metrics.empty()) throw ConfigError("metrics must not be empty");
  if (!(prune.fraction >= 0.0 && prune.fraction <= 0.9)) {
    throw ConfigError("prune.fraction must lie in [0, 0.9]");
  }
  if (prune.warmup_epochs == 0) {
    throw ConfigError("prune.warmup_epochs must be positive");
  }
  for (Metric m : prune.metrics) {
    if (std::find(metrics.begin(), metrics.end(), m) == metrics.end()) {
      throw ConfigError("prune.metrics: '" + ToString(m) +
                        "' is not in the computed metrics");
    }
  }
  RequirePositive(release.epsilon, "release.epsilon");
  RequirePositive(release.clip_bound, "release.clip_bound");
  if (release.budget_cap) RequirePositive(*release.budget_cap, "release.budget_cap");
  if (release.variance_epsilon) {
    RequirePositive(*release.variance_epsilon, "release.variance_epsilon");
  }
  for (Metric m : release.metrics) {
    if (std::find(metrics.begin(), metrics.end(), m) == metrics.end()) {
      throw ConfigError("release.metrics: '" + ToString(m) +
                        "' is not in the computed metrics");
    }
  }
  if (release.metrics.empty()) {
    throw ConfigError("release.metrics must not be empty");
  }
  if (federation.clients == 0) {
    throw ConfigError("federation.clients must be positive");
  }
  if (federation.strategy != "iid" && federation.strategy != "dirichlet") {
    throw ConfigError("federation.strategy: unknown strategy '" +
                      federation.strategy + "' (expected iid or dirichlet)");
  }
  RequirePositive(federation.alpha, "federation.alpha");
  if (federation.rounds == 0 || federation.local_epochs == 0) {
    throw ConfigError("federation.rounds and local_epochs must be positive");
  }
  if (!(federation.reward_pool >= 0.0) || !std::isfinite(federation.reward_pool)) {
    throw ConfigError("federation.reward_pool must be finite and >= 0");
  }
  if (compare.k == 0) throw ConfigError("compare.k must be positive");
  for (std::size_t i = 0; i < compare.settings.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (compare.settings[i].name == compare.settings[j].name) {
        throw ConfigError("compare.settings: duplicate name '" +
                          compare.settings[i].name + "'");
      }
    }
  }
  // Surfaces model errors before any pixels are read.
  json probe = model;
  probe["input_shape"] = InputShapeOf(dataset);
  probe["num_classes"] = 2;
  ModelSpec::FromJson(probe);
}

json ExperimentConfig::ToJson() const {
  json settings = json::array();
  for (const CompareSetting& s : compare.settings) {
    settings.push_back({{"name", s.name},
                        {"privacy", PrivacyToJson(s.privacy)},
                        {"seed", Optional(s.seed)}});
  }
  return {
      {"seed", seed},
      {"dataset", DatasetToJson(dataset)},
      {"model", model},
      {"train",
       {{"epochs", train.epochs},
        {"lr", train.lr},
        {"sample_rate", train.sample_rate},
        {"checkpoints", train.checkpoints},
        {"privacy", PrivacyToJson(train.privacy)}}},
      {"metrics", MetricsToJson(metrics)},
      {"vog_literal", vog_literal},
      {"prune",
       {{"fraction", prune.fraction},
        {"warmup_epochs", prune.warmup_epochs},
        {"retrain_epochs", prune.retrain_epochs},
        {"metrics", MetricsToJson(prune.metrics)},
        {"random_control", prune.random_control},
        {"atypical_control", prune.atypical_control}}},
      {"release",
       {{"epsilon", release.epsilon},
        {"clip_bound", release.clip_bound},
        {"budget_cap", Optional(release.budget_cap)},
        {"metrics", MetricsToJson(release.metrics)},
        {"variance_epsilon", Optional(release.variance_epsilon)}}},
      {"federation",
       {{"clients", federation.clients},
        {"strategy", federation.strategy},
        {"alpha", federation.alpha},
        {"rounds", federation.rounds},
        {"local_epochs", federation.local_epochs},
        {"reward_pool", federation.reward_pool}}},
      {"compare",
       {{"settings", settings},
        {"k", compare.k},
        {"pairing", ToString(compare.pairing)}}},
  };
}

std::string ExperimentConfig::Hash() const {
  const std::string dump = CanonicalJson(ToJson());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ModelSpec ExperimentConfig::ResolveModel(const Dataset& data) const {
  json j = model;
  j["input_shape"] = data.input_shape;
  j["num_classes"] = data.num_classes;
  return ModelSpec::FromJson(j);
}

}  // namespace fedval
