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
#include "fedval/autodiff/gradients.h"

#include <utility>
#include <vector>

#include "fedval/autodiff/ops.h"
#include "fedval/autodiff/tape.h"
#include "fedval/util/errors.h"

namespace fedval {

using autodiff::Tape;
using autodiff::Var;

namespace {

// Forward pass of one sample on a fresh tape.
struct Recorded {
  std::vector<Var> params;
  Var input;
  Var loss;
};

Recorded RecordLoss(Tape& tape, const ParamVector& params,
                    const ModelSpec& spec, const Tensor& input,
                    std::size_t label, bool params_grad, bool input_grad) {
  CheckInput(spec, input);
  if (label >= spec.num_classes) {
    throw ConfigError("label " + std::to_string(label) +
                      " out of range for " + std::to_string(spec.num_classes) +
                      " classes");
  }
  if (params.size() != spec.Layout()->total_size()) {
    throw ShapeError("parameter vector of size " +
                     std::to_string(params.size()) +
                     " does not match the model layout");
  }
  Recorded r;
  for (std::size_t i = 0; i < params.layout().blocks().size(); ++i) {
    r.params.push_back(tape.Leaf(params.BlockTensor(i), params_grad));
  }
  r.input = tape.Leaf(input, input_grad);
  Var logits = Forward(spec, r.params, r.input);
  tape.set_scope("loss");
  r.loss = autodiff::Sub(autodiff::LogSumExp(logits),
                         autodiff::Pick(logits, label));
  return r;
}

ParamVector CollectParams(const ParamVector& like, std::span<const Var> grads) {
  std::vector<double> flat;
  flat.reserve(like.size());
  for (const Var& g : grads) {
    auto d = g.value().data();
    flat.insert(flat.end(), d.begin(), d.end());
  }
  return ParamVector(like.layout_ptr(), std::move(flat));
}

// Reverse-over-reverse: record the parameter-gradient sweep, reduce it to
// |grad|^2 and sweep again down to the input.
Tensor NestedSweep(Tape& tape, const Var& loss, std::span<const Var> params,
                   const Var& input) {
  std::vector<Var> param_grads =
      tape.Gradients(loss, params, /*create_graph=*/true);
  tape.set_scope("param_grad_norm");
  Var sq = autodiff::Dot(param_grads[0], param_grads[0]);
  for (std::size_t i = 1; i < param_grads.size(); ++i) {
    sq = autodiff::Add(sq, autodiff::Dot(param_grads[i], param_grads[i]));
  }
  std::vector<Var> wrt = {input};
  return tape.Gradients(sq, wrt, /*create_graph=*/false)[0].value();
}

}  // namespace

double PerSampleLoss(const ParamVector& params, const ModelSpec& spec,
                     const Tensor& input, std::size_t label) {
  Tape tape;
  return RecordLoss(tape, params, spec, input, label, false, false)
      .loss.value()
      .item();
}

SampleGradients ComputeSampleGradients(const ParamVector& params,
                                       const ModelSpec& spec,
                                       const Tensor& input, std::size_t label,
                                       bool want_input_grad) {
  Tape tape;
  Recorded r =
      RecordLoss(tape, params, spec, input, label, true, want_input_grad);
  std::vector<Var> wrt = r.params;
  if (want_input_grad) wrt.push_back(r.input);
  std::vector<Var> grads = tape.Gradients(r.loss, wrt, /*create_graph=*/false);
  SampleGradients out;
  out.loss = r.loss.value().item();
  out.params = CollectParams(
      params, std::span<const Var>(grads).first(r.params.size()));
  if (want_input_grad) out.input = grads.back().value();
  return out;
}

ParamVector GradParams(const ParamVector& params, const ModelSpec& spec,
                       const Tensor& input, std::size_t label) {
  return ComputeSampleGradients(params, spec, input, label, false).params;
}

Tensor GradInput(const ParamVector& params, const ModelSpec& spec,
                 const Tensor& input, std::size_t label) {
  Tape tape;
  Recorded r = RecordLoss(tape, params, spec, input, label, false, true);
  std::vector<Var> wrt = {r.input};
  return tape.Gradients(r.loss, wrt, false)[0].value();
}

Tensor GradInputOfSqParamGradNorm(const ParamVector& params,
                                  const ModelSpec& spec, const Tensor& input,
                                  std::size_t label, NestedMode mode,
                                  double fd_step) {
  if (!IsSmooth(spec.activation)) {
    throw UnsupportedOpError("activation '" + ToString(spec.activation) +
                             "' is not twice differentiable; the nested "
                             "input derivative needs tanh or softplus");
  }
  if (mode == NestedMode::kFiniteDifference) {
    CheckInput(spec, input);
    return FiniteDiff(
        [&](const Tensor& x) {
          return GradParams(params, spec, x, label).SquaredNorm();
        },
        input, fd_step);
  }
  Tape tape;
  Recorded r = RecordLoss(tape, params, spec, input, label, true, true);
  return NestedSweep(tape, r.loss, r.params, r.input);
}

std::vector<Tensor> ProgramGradParams(const LossProgram& loss,
                                      std::span<const Tensor> params,
                                      const Tensor& input) {
  Tape tape;
  std::vector<Var> p;
  for (const Tensor& t : params) p.push_back(tape.Leaf(t, true));
  Var x = tape.Leaf(input, false);
  std::vector<Var> grads = tape.Gradients(loss(p, x), p, false);
  std::vector<Tensor> out;
  for (const Var& g : grads) out.push_back(g.value());
  return out;
}

Tensor ProgramGradInput(const LossProgram& loss, std::span<const Tensor> params,
                        const Tensor& input) {
  Tape tape;
  std::vector<Var> p;
  for (const Tensor& t : params) p.push_back(tape.Leaf(t, false));
  std::vector<Var> x = {tape.Leaf(input, true)};
  return tape.Gradients(loss(p, x[0]), x, false)[0].value();
}

Tensor ProgramGradInputOfSqParamGradNorm(const LossProgram& loss,
                                         std::span<const Tensor> params,
                                         const Tensor& input) {
  Tape tape;
  std::vector<Var> p;
  for (const Tensor& t : params) p.push_back(tape.Leaf(t, true));
  Var x = tape.Leaf(input, true);
  Var l = loss(p, x);
  return NestedSweep(tape, l, p, x);
}

Tensor FiniteDiff(const std::function<double(const Tensor&)>& f,
                  const Tensor& point, double h) {
  Tensor grad(point.shape());
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double x0 = point[i];
    probe[i] = x0 + h;
    const double up = f(probe);
    probe[i] = x0 - h;
    const double down = f(probe);
    probe[i] = x0;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace fedval
