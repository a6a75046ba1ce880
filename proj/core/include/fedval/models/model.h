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
#ifndef FEDVAL_MODELS_MODEL_H_
#define FEDVAL_MODELS_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedval/autodiff/tape.h"
#include "fedval/autodiff/tensor.h"
#include "fedval/models/dataset.h"

namespace fedval {

enum class Activation { kTanh, kSoftplus, kRelu };
enum class Pooling { kNone, kAvg };

std::string ToString(Activation a);
Activation ActivationFromString(const std::string& s);

// True when the activation has a non-degenerate second derivative.
inline bool IsSmooth(Activation a) { return a != Activation::kRelu; }

struct MlpArch {
  std::vector<std::size_t> hidden;
};

struct ConvBlock {
  std::size_t channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
};

struct CnnArch {
  std::vector<ConvBlock> blocks;
  Pooling pooling = Pooling::kAvg;
  // Width of the dense layer before the classifier; 0 for none.
  std::size_t head_width = 0;
};

struct ModelSpec {
  std::variant<MlpArch, CnnArch> arch;
  Activation activation = Activation::kTanh;
  Shape input_shape;  // [C,H,W]
  std::size_t num_classes = 0;

  // Two conv blocks (16, 32 channels, 3x3, stride 1) with 2x2 average
  // pooling, a 128-wide head and tanh.
  static ModelSpec DefaultCnn(Shape input_shape, std::size_t num_classes);
  static ModelSpec Mlp(Shape input_shape, std::vector<std::size_t> hidden,
                       std::size_t num_classes,
                       Activation activation = Activation::kTanh);

  // Throws ConfigError when the layer dimensions do not chain or the class
  // count is below 2.
  void Validate() const;
  std::shared_ptr<const ParamLayout> Layout() const;

  nlohmann::json ToJson() const;
  static ModelSpec FromJson(const nlohmann::json& j);

  friend bool operator==(const ModelSpec& a, const ModelSpec& b) {
    return a.ToJson() == b.ToJson();
  }
};

struct ModelState {
  std::shared_ptr<const ModelSpec> spec;
  ParamVector params;
  std::uint64_t init_seed = 0;
};

// Glorot-uniform weights, zero biases; deterministic per seed.
ModelState InitModel(const ModelSpec& spec, std::uint64_t seed);

// Records the forward pass on `tape` and returns the logits. `params` holds
// one Var per block of spec.Layout(), in layout order.
autodiff::Var Forward(const ModelSpec& spec, std::span<const autodiff::Var> params,
                      const autodiff::Var& input);

// Throws ShapeError naming expected and actual shapes.
void CheckInput(const ModelSpec& spec, const Tensor& input);

// Logits for one input, without recording gradients.
std::vector<double> Predict(const ModelState& state, const Tensor& input);

// Argmax with ties broken by the lowest class index.
std::size_t ArgMax(std::span<const double> logits);

// Fraction of samples whose argmax prediction equals the label. Throws
// ConfigError on an empty dataset.
double Accuracy(const ModelState& state, const Dataset& dataset);

// Checkpoint file: "FVCK", u32 LE version, u32 LE length + UTF-8 JSON
// {"spec": ..., "init_seed": ...}, then the parameters as LE f64.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void SaveCheckpoint(const ModelState& state, const std::string& path);
ModelState LoadCheckpoint(const std::string& path);

}  // namespace fedval

#endif  // FEDVAL_MODELS_MODEL_H_
