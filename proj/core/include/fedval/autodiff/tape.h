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
#ifndef FEDVAL_AUTODIFF_TAPE_H_
#define FEDVAL_AUTODIFF_TAPE_H_

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fedval/autodiff/tensor.h"

namespace fedval::autodiff {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid for the lifetime
// of the tape.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Maps the upstream gradient of an op's output to one gradient per op input.
// An invalid Var in the result means "no gradient for this input". Backward
// functions are written in terms of recorded ops, so the gradient computation
// can itself be differentiated.
using BackwardFn = std::function<std::vector<Var>(const Var& grad_output)>;

// Append-only record of a computation. Node ids are assigned in creation
// order, which is a valid topological order for the reverse sweep.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var Leaf(Tensor value, bool requires_grad);
  Var Constant(Tensor value);

  // Records the output of an op. Output finiteness is checked here; a
  // non-finite value raises NumericError naming the op and current scope.
  // `smooth` = false marks ops without a usable second derivative, which
  // makes a create_graph sweep through them fail.
  Var Record(const char* op, Tensor value, std::vector<Var> inputs,
             BackwardFn backward, bool smooth = true);

  const Tensor& value(const Var& v) const { return nodes_[v.id()].value; }
  bool requires_grad(const Var& v) const {
    return nodes_[v.id()].requires_grad;
  }
  const char* op_name(const Var& v) const { return nodes_[v.id()].op; }
  std::size_t size() const { return nodes_.size(); }

  // Label attached to subsequently recorded nodes (e.g. a layer name); used
  // in error messages.
  void set_scope(std::string scope) { scope_ = std::move(scope); }
  const std::string& scope() const { return scope_; }

  // Reverse sweep from a single-element output. Returns d(output)/d(w) for
  // each w in wrt; unreachable inputs get a zero constant. With
  // create_graph the sweep is recorded so its results can be differentiated
  // again (reverse-over-reverse); otherwise results are plain constants.
  std::vector<Var> Gradients(const Var& output, std::span<const Var> wrt,
                             bool create_graph);

 private:
  struct Node {
    Tensor value;
    std::vector<Var> inputs;
    BackwardFn backward;
    const char* op = "";
    std::string scope;
    bool requires_grad = false;
    bool smooth = true;
  };

  std::deque<Node> nodes_;
  std::string scope_;
  bool recording_ = true;
};

}  // namespace fedval::autodiff

#endif  // FEDVAL_AUTODIFF_TAPE_H_
