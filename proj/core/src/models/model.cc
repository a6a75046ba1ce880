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
#include "fedval/models/model.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <utility>

#include "fedval/autodiff/ops.h"
#include "fedval/util/errors.h"
#include "fedval/util/json_util.h"
#include "fedval/util/parallel.h"
#include "fedval/util/rng.h"

namespace fedval {

using autodiff::Tape;
using autodiff::Var;
using nlohmann::json;

Dataset Dataset::Select(std::span<const std::size_t> positions) const {
  Dataset out;
  out.input_shape = input_shape;
  out.num_classes = num_classes;
  out.samples.reserve(positions.size());
  for (std::size_t p : positions) out.samples.push_back(samples.at(p));
  return out;
}

std::vector<std::size_t> Dataset::Labels() const {
  std::vector<std::size_t> labels;
  labels.reserve(samples.size());
  for (const Sample& s : samples) labels.push_back(s.label);
  return labels;
}

std::string ToString(Activation a) {
  switch (a) {
    case Activation::kTanh:
      return "tanh";
    case Activation::kSoftplus:
      return "softplus";
    case Activation::kRelu:
      return "relu";
  }
  return "unknown";
}

Activation ActivationFromString(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "softplus") return Activation::kSoftplus;
  if (s == "relu") return Activation::kRelu;
  throw ConfigError("unknown activation '" + s + "'");
}

ModelSpec ModelSpec::DefaultCnn(Shape input_shape, std::size_t num_classes) {
  ModelSpec spec;
  CnnArch cnn;
  cnn.blocks = {{16, 3, 1}, {32, 3, 1}};
  cnn.pooling = Pooling::kAvg;
  cnn.head_width = 128;
  spec.arch = cnn;
  spec.activation = Activation::kTanh;
  spec.input_shape = std::move(input_shape);
  spec.num_classes = num_classes;
  return spec;
}

ModelSpec ModelSpec::Mlp(Shape input_shape, std::vector<std::size_t> hidden,
                         std::size_t num_classes, Activation activation) {
  ModelSpec spec;
  spec.arch = MlpArch{std::move(hidden)};
  spec.activation = activation;
  spec.input_shape = std::move(input_shape);
  spec.num_classes = num_classes;
  return spec;
}

namespace {

// Walks the architecture and emits the parameter blocks; also validates the
// dimension chain.
std::vector<ParamBlock> BuildBlocks(const ModelSpec& spec) {
  if (spec.num_classes < 2) {
    throw ConfigError("model needs at least 2 classes, got " +
                      std::to_string(spec.num_classes));
  }
  if (spec.input_shape.size() != 3) {
    throw ConfigError("model input shape must be [C,H,W], got " +
                      ShapeToString(spec.input_shape));
  }
  for (std::size_t d : spec.input_shape) {
    if (d == 0) throw ConfigError("model input dimensions must be positive");
  }
  std::vector<ParamBlock> blocks;
  std::size_t offset = 0;
  auto add = [&](std::string name, Shape shape) {
    ParamBlock b{std::move(name), offset, std::move(shape)};
    offset += b.size();
    blocks.push_back(std::move(b));
  };

  std::size_t features = ShapeSize(spec.input_shape);
  if (const auto* cnn = std::get_if<CnnArch>(&spec.arch)) {
    std::size_t c = spec.input_shape[0];
    std::size_t h = spec.input_shape[1];
    std::size_t w = spec.input_shape[2];
    for (std::size_t i = 0; i < cnn->blocks.size(); ++i) {
      const ConvBlock& b = cnn->blocks[i];
      if (b.channels == 0 || b.kernel == 0 || b.stride == 0) {
        throw ConfigError("conv block " + std::to_string(i) +
                          " has a zero channel, kernel or stride");
      }
      if (b.kernel > h || b.kernel > w) {
        throw ConfigError("conv block " + std::to_string(i) + " kernel " +
                          std::to_string(b.kernel) + " exceeds its input " +
                          std::to_string(h) + "x" + std::to_string(w));
      }
      const std::string name = "conv" + std::to_string(i);
      add(name + ".weight", {b.channels, c, b.kernel, b.kernel});
      add(name + ".bias", {b.channels});
      c = b.channels;
      h = (h - b.kernel) / b.stride + 1;
      w = (w - b.kernel) / b.stride + 1;
      if (cnn->pooling == Pooling::kAvg) {
        if (h < 2 || w < 2) {
          throw ConfigError("conv block " + std::to_string(i) +
                            " output too small to pool: " + std::to_string(h) +
                            "x" + std::to_string(w));
        }
        h /= 2;
        w /= 2;
      }
    }
    features = c * h * w;
    if (cnn->head_width > 0) {
      add("fc0.weight", {cnn->head_width, features});
      add("fc0.bias", {cnn->head_width});
      features = cnn->head_width;
    }
  } else {
    const auto& mlp = std::get<MlpArch>(spec.arch);
    for (std::size_t i = 0; i < mlp.hidden.size(); ++i) {
      if (mlp.hidden[i] == 0) {
        throw ConfigError("hidden layer " + std::to_string(i) +
                          " has zero width");
      }
      const std::string name = "fc" + std::to_string(i);
      add(name + ".weight", {mlp.hidden[i], features});
      add(name + ".bias", {mlp.hidden[i]});
      features = mlp.hidden[i];
    }
  }
  add("out.weight", {spec.num_classes, features});
  add("out.bias", {spec.num_classes});
  return blocks;
}

Var Activate(Activation a, const Var& x) {
  switch (a) {
    case Activation::kTanh:
      return autodiff::Tanh(x);
    case Activation::kSoftplus:
      return autodiff::Softplus(x);
    case Activation::kRelu:
      return autodiff::Relu(x);
  }
  throw ConfigError("unknown activation");
}

Var Dense(const Var& w, const Var& b, const Var& x) {
  return autodiff::Add(autodiff::MatVec(w, x), b);
}

}  // namespace

void ModelSpec::Validate() const { BuildBlocks(*this); }

std::shared_ptr<const ParamLayout> ModelSpec::Layout() const {
  return std::make_shared<const ParamLayout>(BuildBlocks(*this));
}

json ModelSpec::ToJson() const {
  json j;
  if (const auto* cnn = std::get_if<CnnArch>(&arch)) {
    j["arch"] = "cnn";
    json blocks = json::array();
    for (const ConvBlock& b : cnn->blocks) {
      blocks.push_back(
          {{"channels", b.channels}, {"kernel", b.kernel}, {"stride", b.stride}});
    }
    j["conv"] = blocks;
    j["pooling"] = cnn->pooling == Pooling::kAvg ? "avg" : "none";
    j["head_width"] = cnn->head_width;
  } else {
    j["arch"] = "mlp";
    j["hidden"] = std::get<MlpArch>(arch).hidden;
  }
  j["activation"] = ToString(activation);
  j["input_shape"] = input_shape;
  j["num_classes"] = num_classes;
  return j;
}

ModelSpec ModelSpec::FromJson(const json& j) {
  constexpr std::string_view kContext = "model";
  RequireObject(j, kContext);
  const auto arch = GetRequired<std::string>(j, "arch", kContext);
  ModelSpec spec;
  if (arch == "cnn") {
    CheckKeys(j,
              {"arch", "conv", "pooling", "head_width", "activation",
               "input_shape", "num_classes"},
              kContext);
    CnnArch cnn;
    if (j.contains("conv")) {
      for (const json& b : j.at("conv")) {
        CheckKeys(b, {"channels", "kernel", "stride"}, "model.conv[]");
        cnn.blocks.push_back(
            {GetRequired<std::size_t>(b, "channels", "model.conv[]"),
             GetOr<std::size_t>(b, "kernel", 3, "model.conv[]"),
             GetOr<std::size_t>(b, "stride", 1, "model.conv[]")});
      }
    } else {
      cnn.blocks = {{16, 3, 1}, {32, 3, 1}};
    }
    const auto pooling =
        GetOr<std::string>(j, "pooling", "avg", kContext);
    if (pooling == "avg") {
      cnn.pooling = Pooling::kAvg;
    } else if (pooling == "none") {
      cnn.pooling = Pooling::kNone;
    } else {
      throw ConfigError("model.pooling: unknown pooling '" + pooling + "'");
    }
    cnn.head_width = GetOr<std::size_t>(j, "head_width", 128, kContext);
    spec.arch = cnn;
  } else if (arch == "mlp") {
    CheckKeys(j, {"arch", "hidden", "activation", "input_shape", "num_classes"},
              kContext);
    spec.arch = MlpArch{
        GetOr<std::vector<std::size_t>>(j, "hidden", {}, kContext)};
  } else {
    throw ConfigError("model.arch: unknown architecture '" + arch + "'");
  }
  spec.activation = ActivationFromString(
      GetOr<std::string>(j, "activation", "tanh", kContext));
  spec.input_shape = GetRequired<Shape>(j, "input_shape", kContext);
  spec.num_classes = GetRequired<std::size_t>(j, "num_classes", kContext);
  spec.Validate();
  return spec;
}

ModelState InitModel(const ModelSpec& spec, std::uint64_t seed) {
  auto layout = spec.Layout();
  ParamVector params = ParamVector::Zeros(layout);
  Rng rng = MakeRng(seed, "init");
  for (std::size_t i = 0; i < layout->blocks().size(); ++i) {
    const ParamBlock& b = layout->blocks()[i];
    if (b.shape.size() < 2) continue;  // biases stay zero
    std::size_t fan_in = 1;
    std::size_t fan_out = b.shape[0];
    for (std::size_t d = 1; d < b.shape.size(); ++d) fan_in *= b.shape[d];
    if (b.shape.size() == 4) fan_out *= b.shape[2] * b.shape[3];
    const double limit =
        std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& v : params.mutable_block(i)) v = dist(rng);
  }
  return ModelState{std::make_shared<const ModelSpec>(spec), std::move(params),
                    seed};
}

void CheckInput(const ModelSpec& spec, const Tensor& input) {
  if (input.shape() != spec.input_shape) {
    throw ShapeError("input shape mismatch: expected " +
                     ShapeToString(spec.input_shape) + ", got " +
                     ShapeToString(input.shape()));
  }
}

Var Forward(const ModelSpec& spec, std::span<const Var> params,
            const Var& input) {
  Tape& tape = input.tape();
  const std::string saved_scope = tape.scope();
  std::size_t next = 0;
  auto param = [&]() -> const Var& {
    if (next >= params.size()) {
      throw ShapeError("forward: not enough parameter blocks");
    }
    return params[next++];
  };

  Var h = input;
  if (const auto* cnn = std::get_if<CnnArch>(&spec.arch)) {
    for (std::size_t i = 0; i < cnn->blocks.size(); ++i) {
      tape.set_scope("conv" + std::to_string(i));
      const Var& k = param();
      const Var& b = param();
      h = autodiff::Conv2d(h, k, cnn->blocks[i].stride);
      h = autodiff::Add(h, autodiff::ChannelBroadcast(b, h.shape()));
      h = Activate(spec.activation, h);
      if (cnn->pooling == Pooling::kAvg) h = autodiff::AvgPool2(h);
    }
    h = autodiff::Reshape(h, {h.value().size()});
    if (cnn->head_width > 0) {
      tape.set_scope("fc0");
      const Var& w = param();
      const Var& b = param();
      h = Activate(spec.activation, Dense(w, b, h));
    }
  } else {
    h = autodiff::Reshape(h, {h.value().size()});
    const auto& mlp = std::get<MlpArch>(spec.arch);
    for (std::size_t i = 0; i < mlp.hidden.size(); ++i) {
      tape.set_scope("fc" + std::to_string(i));
      const Var& w = param();
      const Var& b = param();
      h = Activate(spec.activation, Dense(w, b, h));
    }
  }
  tape.set_scope("out");
  const Var& w = param();
  const Var& b = param();
  Var logits = Dense(w, b, h);
  tape.set_scope(saved_scope);
  return logits;
}

std::vector<double> Predict(const ModelState& state, const Tensor& input) {
  CheckInput(*state.spec, input);
  Tape tape;
  std::vector<Var> params;
  for (std::size_t i = 0; i < state.params.layout().blocks().size(); ++i) {
    params.push_back(tape.Constant(state.params.BlockTensor(i)));
  }
  Var x = tape.Constant(input);
  Var logits = Forward(*state.spec, params, x);
  return logits.value().vec();
}

std::size_t ArgMax(std::span<const double> logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return best;
}

double Accuracy(const ModelState& state, const Dataset& dataset) {
  if (dataset.empty()) throw ConfigError("accuracy of an empty dataset");
  std::vector<unsigned char> correct(dataset.size(), 0);
  ParallelFor(dataset.size(), [&](std::size_t i) {
    const Sample& s = dataset.samples[i];
    correct[i] = ArgMax(Predict(state, s.image)) == s.label ? 1 : 0;
  });
  std::size_t hits = 0;
  for (unsigned char c : correct) hits += c;
  return static_cast<double>(hits) / static_cast<double>(dataset.size());
}

namespace {

void PutU32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t GetU32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i]))
         << (8 * i);
  }
  return v;
}

void PutF64(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof bits);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double GetF64(const std::string& in, std::size_t pos) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i]))
            << (8 * i);
  }
  double d;
  std::memcpy(&d, &bits, sizeof d);
  return d;
}

}  // namespace

void SaveCheckpoint(const ModelState& state, const std::string& path) {
  std::string out = "FVCK";
  PutU32(out, kCheckpointVersion);
  json header;
  header["spec"] = state.spec->ToJson();
  header["init_seed"] = state.init_seed;
  const std::string text = header.dump();
  PutU32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for (double v : state.params.data()) PutF64(out, v);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing checkpoint '" + path + "'");
}

ModelState LoadCheckpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint '" + path + "'");
  std::string in((std::istreambuf_iterator<char>(f)),
                 std::istreambuf_iterator<char>());
  if (in.size() < 12 || in.compare(0, 4, "FVCK") != 0) {
    throw IoError("'" + path + "' is not a checkpoint (bad magic)");
  }
  const std::uint32_t version = GetU32(in, 4);
  if (version != kCheckpointVersion) {
    throw IoError("'" + path + "': unsupported checkpoint version " +
                  std::to_string(version));
  }
  const std::uint32_t len = GetU32(in, 8);
  if (in.size() < 12 + static_cast<std::size_t>(len)) {
    throw IoError("'" + path + "': truncated header");
  }
  json header;
  try {
    header = json::parse(in.substr(12, len));
  } catch (const json::exception& e) {
    throw IoError("'" + path + "': bad header JSON: " + e.what());
  }
  ModelSpec spec = ModelSpec::FromJson(header.at("spec"));
  auto layout = spec.Layout();
  const std::size_t body = 12 + len;
  if (in.size() - body != 8 * layout->total_size()) {
    throw IoError("'" + path + "': parameter section holds " +
                  std::to_string(in.size() - body) + " bytes, expected " +
                  std::to_string(8 * layout->total_size()));
  }
  std::vector<double> data(layout->total_size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = GetF64(in, body + 8 * i);
  }
  return ModelState{std::make_shared<const ModelSpec>(std::move(spec)),
                    ParamVector(layout, std::move(data)),
                    header.value("init_seed", std::uint64_t{0})};
}

}  // namespace fedval
