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
#ifndef FEDVAL_AUTODIFF_OPS_H_
#define FEDVAL_AUTODIFF_OPS_H_

#include <cstddef>

#include "fedval/autodiff/tape.h"

// Differentiable ops recorded on a Tape. The set is closed under
// differentiation: every op's backward is expressed with ops from this file,
// which is what makes reverse-over-reverse work.
namespace fedval::autodiff {

// Elementwise; operands must have equal shapes.
Var Add(const Var& a, const Var& b);
Var Sub(const Var& a, const Var& b);
Var Mul(const Var& a, const Var& b);
Var Scale(const Var& a, double c);
Var AddScalar(const Var& a, double c);

// Reductions and broadcasts. Scalars have shape {1}.
Var Sum(const Var& a);
Var Dot(const Var& a, const Var& b);
Var BroadcastScalar(const Var& s, const Shape& shape);
Var Reshape(const Var& a, const Shape& shape);

// Activations.
Var Tanh(const Var& a);
Var Sigmoid(const Var& a);
Var Softplus(const Var& a);
// Not twice differentiable; a create_graph sweep through it throws.
Var Relu(const Var& a);

// Softmax cross-entropy building blocks over a rank-1 logit vector.
Var Softmax(const Var& z);
Var LogSumExp(const Var& z);
Var Pick(const Var& z, std::size_t index);
Var OneHot(const Var& s, std::size_t index, const Shape& shape);

// Dense layer algebra: y = W x, y = W^T v, M = u v^T.
Var MatVec(const Var& w, const Var& x);
Var MatVecT(const Var& w, const Var& v);
Var Outer(const Var& u, const Var& v);

// Valid (unpadded) 2-D cross-correlation of x[C,H,W] with k[O,C,kh,kw].
Var Conv2d(const Var& x, const Var& k, std::size_t stride);
// Adjoint of Conv2d in x: g[O,Ho,Wo], k[O,C,kh,kw] -> [C,H,W].
Var Conv2dInputGrad(const Var& g, const Var& k, const Shape& input_shape,
                    std::size_t stride);
// Adjoint of Conv2d in k: x[C,H,W], g[O,Ho,Wo] -> [O,C,kh,kw].
Var Conv2dWeightGrad(const Var& x, const Var& g, const Shape& kernel_shape,
                     std::size_t stride);

// b[O] broadcast over [O,H,W], and its adjoint.
Var ChannelBroadcast(const Var& b, const Shape& shape);
Var ChannelSum(const Var& g);

// 2x2 average pooling with stride 2 over [C,H,W] (trailing odd row/column
// dropped), and its adjoint.
Var AvgPool2(const Var& x);
Var AvgPool2Backward(const Var& g, const Shape& input_shape);

}  // namespace fedval::autodiff

#endif  // FEDVAL_AUTODIFF_OPS_H_
