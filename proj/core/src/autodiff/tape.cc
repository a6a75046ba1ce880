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
#include "fedval/autodiff/tape.h"

#include <utility>

#include "fedval/autodiff/ops.h"
#include "fedval/util/errors.h"

namespace fedval::autodiff {

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::Leaf(Tensor value, bool requires_grad) {
  Node node;
  node.value = std::move(value);
  node.op = "leaf";
  node.scope = scope_;
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::Constant(Tensor value) { return Leaf(std::move(value), false); }

Var Tape::Record(const char* op, Tensor value, std::vector<Var> inputs,
                 BackwardFn backward, bool smooth) {
  if (!value.AllFinite()) {
    throw NumericError(std::string("non-finite value produced by op '") + op +
                       "'" + (scope_.empty() ? "" : " in layer '" + scope_ + "'"));
  }
  bool needs_grad = false;
  if (recording_) {
    for (const Var& in : inputs) {
      if (in.valid() && nodes_[in.id()].requires_grad) needs_grad = true;
    }
  }
  Node node;
  node.value = std::move(value);
  node.op = op;
  node.scope = scope_;
  node.smooth = smooth;
  node.requires_grad = needs_grad;
  if (needs_grad) {
    node.inputs = std::move(inputs);
    node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

std::vector<Var> Tape::Gradients(const Var& output, std::span<const Var> wrt,
                                 bool create_graph) {
  if (output.value().size() != 1) {
    throw ShapeError("Gradients needs a single-element output, got shape " +
                     ShapeToString(output.shape()));
  }
  const std::size_t end = output.id() + 1;
  std::vector<Var> grads(end);

  const bool saved_recording = recording_;
  const std::string saved_scope = scope_;
  recording_ = create_graph;

  grads[output.id()] = Constant(Tensor::Filled(output.shape(), 1.0));
  for (std::size_t i = end; i-- > 0;) {
    if (!grads[i].valid()) continue;
    // Copy what we need; the deque may grow while backward runs.
    if (!nodes_[i].requires_grad || !nodes_[i].backward) continue;
    if (create_graph && !nodes_[i].smooth) {
      recording_ = saved_recording;
      scope_ = saved_scope;
      throw UnsupportedOpError(
          std::string("op '") + nodes_[i].op + "' in layer '" +
          nodes_[i].scope +
          "' is not twice differentiable; use a smooth activation");
    }
    scope_ = nodes_[i].scope;
    const std::vector<Var> inputs = nodes_[i].inputs;
    const BackwardFn backward = nodes_[i].backward;
    std::vector<Var> input_grads;
    try {
      input_grads = backward(grads[i]);
    } catch (...) {
      recording_ = saved_recording;
      scope_ = saved_scope;
      throw;
    }
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      const Var& in = inputs[k];
      if (!in.valid() || k >= input_grads.size() || !input_grads[k].valid()) {
        continue;
      }
      if (!nodes_[in.id()].requires_grad) continue;
      Var& slot = grads[in.id()];
      slot = slot.valid() ? Add(slot, input_grads[k]) : input_grads[k];
    }
  }

  std::vector<Var> result;
  result.reserve(wrt.size());
  for (const Var& w : wrt) {
    if (w.id() < end && grads[w.id()].valid()) {
      result.push_back(grads[w.id()]);
    } else {
      result.push_back(Constant(Tensor(w.shape())));
    }
  }
  recording_ = saved_recording;
  scope_ = saved_scope;
  return result;
}

}  // namespace fedval::autodiff
