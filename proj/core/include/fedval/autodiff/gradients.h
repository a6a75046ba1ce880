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
#ifndef FEDVAL_AUTODIFF_GRADIENTS_H_
#define FEDVAL_AUTODIFF_GRADIENTS_H_

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "fedval/autodiff/tape.h"
#include "fedval/autodiff/tensor.h"
#include "fedval/models/model.h"

// Per-sample derivatives of the softmax cross-entropy loss of a model.
// All functions are pure and safe to call concurrently on shared state.
namespace fedval {

// Softmax cross-entropy of one sample. Throws ShapeError on an input shape
// mismatch and ConfigError on an out-of-range label.
double PerSampleLoss(const ParamVector& params, const ModelSpec& spec,
                     const Tensor& input, std::size_t label);

// d loss / d params, with the same layout as `params`.
ParamVector GradParams(const ParamVector& params, const ModelSpec& spec,
                       const Tensor& input, std::size_t label);

// d loss / d input, shaped like `input`.
Tensor GradInput(const ParamVector& params, const ModelSpec& spec,
                 const Tensor& input, std::size_t label);

// Loss plus both first-order gradients from a single forward/reverse pass.
struct SampleGradients {
  double loss = 0.0;
  ParamVector params;
  Tensor input;
};
SampleGradients ComputeSampleGradients(const ParamVector& params,
                                       const ModelSpec& spec,
                                       const Tensor& input, std::size_t label,
                                       bool want_input_grad);

enum class NestedMode {
  // Second reverse sweep over the recorded first sweep.
  kReverseOverReverse,
  // Central differences of |grad_params|^2 over the input entries.
  kFiniteDifference,
};

// d/dx of |d loss / d params|_2^2. Requires a smooth activation; throws
// UnsupportedOpError otherwise.
Tensor GradInputOfSqParamGradNorm(
    const ParamVector& params, const ModelSpec& spec, const Tensor& input,
    std::size_t label, NestedMode mode = NestedMode::kReverseOverReverse,
    double fd_step = 1e-4);

// The same derivatives for an arbitrary scalar program built from tape ops,
// e.g. a squared-error toy model. `loss` receives one Var per parameter
// tensor and the input Var.
using LossProgram = std::function<autodiff::Var(
    std::span<const autodiff::Var> params, const autodiff::Var& input)>;

std::vector<Tensor> ProgramGradParams(const LossProgram& loss,
                                      std::span<const Tensor> params,
                                      const Tensor& input);
Tensor ProgramGradInput(const LossProgram& loss, std::span<const Tensor> params,
                        const Tensor& input);
Tensor ProgramGradInputOfSqParamGradNorm(const LossProgram& loss,
                                         std::span<const Tensor> params,
                                         const Tensor& input);

// Central-difference gradient of a scalar function at `point`.
Tensor FiniteDiff(const std::function<double(const Tensor&)>& f,
                  const Tensor& point, double h);

}  // namespace fedval

#endif  // FEDVAL_AUTODIFF_GRADIENTS_H_
