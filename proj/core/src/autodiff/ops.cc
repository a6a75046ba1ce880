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
#include "fedval/autodiff/ops.h"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fedval/util/errors.h"

namespace fedval::autodiff {
namespace {

void RequireSameShape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     ShapeToString(a.shape()) + " vs " +
                     ShapeToString(b.shape()));
  }
}

void RequireRank(const char* op, const Var& a, std::size_t rank) {
  if (a.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got shape " +
                     ShapeToString(a.shape()));
  }
}

void RequireScalar(const char* op, const Var& a) {
  if (a.value().size() != 1) {
    throw ShapeError(std::string(op) + ": expected a scalar, got shape " +
                     ShapeToString(a.shape()));
  }
}

template <typename F>
Tensor Map(const Tensor& a, F f) {
  std::vector<double> out(a.size());
  auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return MakeTensorUnchecked(a.shape(), std::move(out));
}

template <typename F>
Tensor Zip(const Tensor& a, const Tensor& b, F f) {
  std::vector<double> out(a.size());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i], y[i]);
  return MakeTensorUnchecked(a.shape(), std::move(out));
}

struct ConvDims {
  std::size_t channels, height, width;
  std::size_t out_channels, kernel_h, kernel_w;
  std::size_t out_h, out_w, stride;
};

ConvDims MakeConvDims(const Shape& x, const Shape& k, std::size_t stride) {
  if (x.size() != 3 || k.size() != 4) {
    throw ShapeError("conv2d expects input [C,H,W] and kernel [O,C,kh,kw], "
                     "got " + ShapeToString(x) + " and " + ShapeToString(k));
  }
  if (stride == 0) throw ShapeError("conv2d stride must be positive");
  if (x[0] != k[1]) {
    throw ShapeError("conv2d channel mismatch: input " + ShapeToString(x) +
                     ", kernel " + ShapeToString(k));
  }
  if (k[2] > x[1] || k[3] > x[2]) {
    throw ShapeError("conv2d kernel " + ShapeToString(k) +
                     " larger than input " + ShapeToString(x));
  }
  return ConvDims{x[0], x[1], x[2], k[0], k[2], k[3],
                  (x[1] - k[2]) / stride + 1, (x[2] - k[3]) / stride + 1,
                  stride};
}

Tensor ConvForwardKernel(const Tensor& x, const Tensor& k, const ConvDims& d) {
  std::vector<double> y(d.out_channels * d.out_h * d.out_w, 0.0);
  const double* xd = x.data().data();
  const double* kd = k.data().data();
  for (std::size_t o = 0; o < d.out_channels; ++o) {
    double* yo = y.data() + o * d.out_h * d.out_w;
    for (std::size_t c = 0; c < d.channels; ++c) {
      const double* xc = xd + c * d.height * d.width;
      for (std::size_t a = 0; a < d.kernel_h; ++a) {
        for (std::size_t b = 0; b < d.kernel_w; ++b) {
          const double kv =
              kd[((o * d.channels + c) * d.kernel_h + a) * d.kernel_w + b];
          for (std::size_t p = 0; p < d.out_h; ++p) {
            const double* xrow = xc + (d.stride * p + a) * d.width + b;
            double* yrow = yo + p * d.out_w;
            if (d.stride == 1) {
              for (std::size_t q = 0; q < d.out_w; ++q) yrow[q] += kv * xrow[q];
            } else {
              for (std::size_t q = 0; q < d.out_w; ++q) {
                yrow[q] += kv * xrow[d.stride * q];
              }
            }
          }
        }
      }
    }
  }
  return MakeTensorUnchecked({d.out_channels, d.out_h, d.out_w}, std::move(y));
}

Tensor ConvInputGradKernel(const Tensor& g, const Tensor& k,
                           const ConvDims& d) {
  std::vector<double> gx(d.channels * d.height * d.width, 0.0);
  const double* gd = g.data().data();
  const double* kd = k.data().data();
  for (std::size_t o = 0; o < d.out_channels; ++o) {
    const double* go = gd + o * d.out_h * d.out_w;
    for (std::size_t c = 0; c < d.channels; ++c) {
      double* xc = gx.data() + c * d.height * d.width;
      for (std::size_t a = 0; a < d.kernel_h; ++a) {
        for (std::size_t b = 0; b < d.kernel_w; ++b) {
          const double kv =
              kd[((o * d.channels + c) * d.kernel_h + a) * d.kernel_w + b];
          for (std::size_t p = 0; p < d.out_h; ++p) {
            double* xrow = xc + (d.stride * p + a) * d.width + b;
            const double* grow = go + p * d.out_w;
            if (d.stride == 1) {
              for (std::size_t q = 0; q < d.out_w; ++q) xrow[q] += kv * grow[q];
            } else {
              for (std::size_t q = 0; q < d.out_w; ++q) {
                xrow[d.stride * q] += kv * grow[q];
              }
            }
          }
        }
      }
    }
  }
  return MakeTensorUnchecked({d.channels, d.height, d.width}, std::move(gx));
}

Tensor ConvWeightGradKernel(const Tensor& x, const Tensor& g,
                            const ConvDims& d) {
  std::vector<double> gk(d.out_channels * d.channels * d.kernel_h * d.kernel_w,
                         0.0);
  const double* xd = x.data().data();
  const double* gd = g.data().data();
  for (std::size_t o = 0; o < d.out_channels; ++o) {
    const double* go = gd + o * d.out_h * d.out_w;
    for (std::size_t c = 0; c < d.channels; ++c) {
      const double* xc = xd + c * d.height * d.width;
      for (std::size_t a = 0; a < d.kernel_h; ++a) {
        for (std::size_t b = 0; b < d.kernel_w; ++b) {
          double acc = 0.0;
          for (std::size_t p = 0; p < d.out_h; ++p) {
            const double* xrow = xc + (d.stride * p + a) * d.width + b;
            const double* grow = go + p * d.out_w;
            if (d.stride == 1) {
              for (std::size_t q = 0; q < d.out_w; ++q) acc += xrow[q] * grow[q];
            } else {
              for (std::size_t q = 0; q < d.out_w; ++q) {
                acc += xrow[d.stride * q] * grow[q];
              }
            }
          }
          gk[((o * d.channels + c) * d.kernel_h + a) * d.kernel_w + b] = acc;
        }
      }
    }
  }
  return MakeTensorUnchecked(
      {d.out_channels, d.channels, d.kernel_h, d.kernel_w}, std::move(gk));
}

}  // namespace

Var Add(const Var& a, const Var& b) {
  RequireSameShape("add", a, b);
  Tensor out = Zip(a.value(), b.value(), [](double x, double y) { return x + y; });
  return a.tape().Record("add", std::move(out), {a, b},
                         [](const Var& g) { return std::vector<Var>{g, g}; });
}

Var Sub(const Var& a, const Var& b) {
  RequireSameShape("sub", a, b);
  Tensor out = Zip(a.value(), b.value(), [](double x, double y) { return x - y; });
  return a.tape().Record("sub", std::move(out), {a, b}, [](const Var& g) {
    return std::vector<Var>{g, Scale(g, -1.0)};
  });
}

Var Mul(const Var& a, const Var& b) {
  RequireSameShape("mul", a, b);
  Tensor out = Zip(a.value(), b.value(), [](double x, double y) { return x * y; });
  return a.tape().Record("mul", std::move(out), {a, b}, [a, b](const Var& g) {
    return std::vector<Var>{Mul(g, b), Mul(g, a)};
  });
}

Var Scale(const Var& a, double c) {
  Tensor out = Map(a.value(), [c](double x) { return c * x; });
  return a.tape().Record("scale", std::move(out), {a}, [c](const Var& g) {
    return std::vector<Var>{Scale(g, c)};
  });
}

Var AddScalar(const Var& a, double c) {
  Tensor out = Map(a.value(), [c](double x) { return x + c; });
  return a.tape().Record("add_scalar", std::move(out), {a},
                         [](const Var& g) { return std::vector<Var>{g}; });
}

Var Sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  Shape shape = a.shape();
  return a.tape().Record("sum", MakeTensorUnchecked({1}, {s}), {a},
                         [shape](const Var& g) {
                           return std::vector<Var>{BroadcastScalar(g, shape)};
                         });
}

Var Dot(const Var& a, const Var& b) {
  RequireSameShape("dot", a, b);
  double s = 0.0;
  auto x = a.value().data();
  auto y = b.value().data();
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  Shape shape = a.shape();
  return a.tape().Record(
      "dot", MakeTensorUnchecked({1}, {s}), {a, b},
      [a, b, shape](const Var& g) {
        Var gb = BroadcastScalar(g, shape);
        return std::vector<Var>{Mul(gb, b), Mul(gb, a)};
      });
}

Var BroadcastScalar(const Var& s, const Shape& shape) {
  RequireScalar("broadcast_scalar", s);
  const double v = s.value()[0];
  std::vector<double> out(ShapeSize(shape), v);
  return s.tape().Record("broadcast_scalar",
                         MakeTensorUnchecked(shape, std::move(out)), {s},
                         [](const Var& g) { return std::vector<Var>{Sum(g)}; });
}

Var Reshape(const Var& a, const Shape& shape) {
  Tensor out = a.value().Reshaped(shape);
  Shape original = a.shape();
  return a.tape().Record("reshape", std::move(out), {a},
                         [original](const Var& g) {
                           return std::vector<Var>{Reshape(g, original)};
                         });
}

Var Tanh(const Var& a) {
  Tensor out = Map(a.value(), [](double x) { return std::tanh(x); });
  Tape& tape = a.tape();
  // The backward reads the output node, so record first and capture it.
  auto holder = std::make_shared<Var>();
  Var y = tape.Record("tanh", std::move(out), {a}, [holder](const Var& g) {
    const Var& y = *holder;
    // d tanh = 1 - y^2
    Var dy = AddScalar(Scale(Mul(y, y), -1.0), 1.0);
    return std::vector<Var>{Mul(g, dy)};
  });
  *holder = y;
  return y;
}

Var Sigmoid(const Var& a) {
  Tensor out = Map(a.value(), [](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  Tape& tape = a.tape();
  auto holder = std::make_shared<Var>();
  Var s = tape.Record("sigmoid", std::move(out), {a}, [holder](const Var& g) {
    const Var& s = *holder;
    Var ds = Mul(s, AddScalar(Scale(s, -1.0), 1.0));
    return std::vector<Var>{Mul(g, ds)};
  });
  *holder = s;
  return s;
}

Var Softplus(const Var& a) {
  Tensor out = Map(a.value(), [](double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  });
  return a.tape().Record("softplus", std::move(out), {a}, [a](const Var& g) {
    return std::vector<Var>{Mul(g, Sigmoid(a))};
  });
}

Var Relu(const Var& a) {
  Tensor out = Map(a.value(), [](double x) { return x > 0 ? x : 0.0; });
  Tensor mask = Map(a.value(), [](double x) { return x > 0 ? 1.0 : 0.0; });
  Tape* tape = &a.tape();
  return a.tape().Record(
      "relu", std::move(out), {a},
      [tape, mask = std::move(mask)](const Var& g) {
        return std::vector<Var>{Mul(g, tape->Constant(mask))};
      },
      /*smooth=*/false);
}

Var Softmax(const Var& z) {
  RequireRank("softmax", z, 1);
  auto v = z.value().data();
  const double m = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - m);
    total += out[i];
  }
  for (double& o : out) o /= total;
  Shape shape = z.shape();
  auto holder = std::make_shared<Var>();
  Var s = z.tape().Record(
      "softmax", MakeTensorUnchecked(shape, std::move(out)), {z},
      [holder, shape](const Var& g) {
        const Var& s = *holder;
        // J^T g = s * (g - <g, s>)
        Var centered = Sub(g, BroadcastScalar(Dot(g, s), shape));
        return std::vector<Var>{Mul(s, centered)};
      });
  *holder = s;
  return s;
}

Var LogSumExp(const Var& z) {
  RequireRank("logsumexp", z, 1);
  auto v = z.value().data();
  const double m = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (double x : v) total += std::exp(x - m);
  const double lse = m + std::log(total);
  Shape shape = z.shape();
  return z.tape().Record("logsumexp", MakeTensorUnchecked({1}, {lse}), {z},
                         [z, shape](const Var& g) {
                           return std::vector<Var>{
                               Mul(BroadcastScalar(g, shape), Softmax(z))};
                         });
}

Var Pick(const Var& z, std::size_t index) {
  if (index >= z.value().size()) {
    throw ShapeError("pick index " + std::to_string(index) +
                     " out of range for shape " + ShapeToString(z.shape()));
  }
  Shape shape = z.shape();
  return z.tape().Record("pick", MakeTensorUnchecked({1}, {z.value()[index]}),
                         {z}, [index, shape](const Var& g) {
                           return std::vector<Var>{OneHot(g, index, shape)};
                         });
}

Var OneHot(const Var& s, std::size_t index, const Shape& shape) {
  RequireScalar("one_hot", s);
  std::vector<double> out(ShapeSize(shape), 0.0);
  if (index >= out.size()) {
    throw ShapeError("one_hot index " + std::to_string(index) +
                     " out of range for shape " + ShapeToString(shape));
  }
  out[index] = s.value()[0];
  return s.tape().Record("one_hot", MakeTensorUnchecked(shape, std::move(out)),
                         {s}, [index](const Var& g) {
                           return std::vector<Var>{Pick(g, index)};
                         });
}

Var MatVec(const Var& w, const Var& x) {
  RequireRank("matvec", w, 2);
  RequireRank("matvec", x, 1);
  const std::size_t m = w.shape()[0];
  const std::size_t n = w.shape()[1];
  if (x.shape()[0] != n) {
    throw ShapeError("matvec: weight " + ShapeToString(w.shape()) +
                     " incompatible with input " + ShapeToString(x.shape()));
  }
  std::vector<double> y(m, 0.0);
  const double* wd = w.value().data().data();
  const double* xd = x.value().data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    const double* row = wd + i * n;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * xd[j];
    y[i] = acc;
  }
  return w.tape().Record("matvec", MakeTensorUnchecked({m}, std::move(y)),
                         {w, x}, [w, x](const Var& g) {
                           return std::vector<Var>{Outer(g, x), MatVecT(w, g)};
                         });
}

Var MatVecT(const Var& w, const Var& v) {
  RequireRank("matvec_t", w, 2);
  RequireRank("matvec_t", v, 1);
  const std::size_t m = w.shape()[0];
  const std::size_t n = w.shape()[1];
  if (v.shape()[0] != m) {
    throw ShapeError("matvec_t: weight " + ShapeToString(w.shape()) +
                     " incompatible with vector " + ShapeToString(v.shape()));
  }
  std::vector<double> y(n, 0.0);
  const double* wd = w.value().data().data();
  const double* vd = v.value().data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double vi = vd[i];
    const double* row = wd + i * n;
    for (std::size_t j = 0; j < n; ++j) y[j] += row[j] * vi;
  }
  return w.tape().Record("matvec_t", MakeTensorUnchecked({n}, std::move(y)),
                         {w, v}, [w, v](const Var& g) {
                           return std::vector<Var>{Outer(v, g), MatVec(w, g)};
                         });
}

Var Outer(const Var& u, const Var& v) {
  RequireRank("outer", u, 1);
  RequireRank("outer", v, 1);
  const std::size_t m = u.shape()[0];
  const std::size_t n = v.shape()[0];
  std::vector<double> out(m * n);
  const double* ud = u.value().data().data();
  const double* vd = v.value().data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = ud[i] * vd[j];
  }
  return u.tape().Record("outer", MakeTensorUnchecked({m, n}, std::move(out)),
                         {u, v}, [u, v](const Var& g) {
                           return std::vector<Var>{MatVec(g, v), MatVecT(g, u)};
                         });
}

Var Conv2d(const Var& x, const Var& k, std::size_t stride) {
  const ConvDims d = MakeConvDims(x.shape(), k.shape(), stride);
  Tensor out = ConvForwardKernel(x.value(), k.value(), d);
  Shape x_shape = x.shape();
  Shape k_shape = k.shape();
  return x.tape().Record(
      "conv2d", std::move(out), {x, k},
      [x, k, x_shape, k_shape, stride](const Var& g) {
        return std::vector<Var>{Conv2dInputGrad(g, k, x_shape, stride),
                                Conv2dWeightGrad(x, g, k_shape, stride)};
      });
}

Var Conv2dInputGrad(const Var& g, const Var& k, const Shape& input_shape,
                    std::size_t stride) {
  const ConvDims d = MakeConvDims(input_shape, k.shape(), stride);
  if (g.shape() != Shape{d.out_channels, d.out_h, d.out_w}) {
    throw ShapeError("conv2d_input_grad: upstream shape " +
                     ShapeToString(g.shape()) + " does not match conv output");
  }
  Tensor out = ConvInputGradKernel(g.value(), k.value(), d);
  Shape k_shape = k.shape();
  return g.tape().Record(
      "conv2d_input_grad", std::move(out), {g, k},
      [g, k, k_shape, stride](const Var& u) {
        return std::vector<Var>{Conv2d(u, k, stride),
                                Conv2dWeightGrad(u, g, k_shape, stride)};
      });
}

Var Conv2dWeightGrad(const Var& x, const Var& g, const Shape& kernel_shape,
                     std::size_t stride) {
  const ConvDims d = MakeConvDims(x.shape(), kernel_shape, stride);
  if (g.shape() != Shape{d.out_channels, d.out_h, d.out_w}) {
    throw ShapeError("conv2d_weight_grad: upstream shape " +
                     ShapeToString(g.shape()) + " does not match conv output");
  }
  Tensor out = ConvWeightGradKernel(x.value(), g.value(), d);
  Shape x_shape = x.shape();
  return x.tape().Record(
      "conv2d_weight_grad", std::move(out), {x, g},
      [x, g, x_shape, stride](const Var& u) {
        return std::vector<Var>{Conv2dInputGrad(g, u, x_shape, stride),
                                Conv2d(x, u, stride)};
      });
}

Var ChannelBroadcast(const Var& b, const Shape& shape) {
  RequireRank("channel_broadcast", b, 1);
  if (shape.size() != 3 || shape[0] != b.shape()[0]) {
    throw ShapeError("channel_broadcast: bias " + ShapeToString(b.shape()) +
                     " incompatible with " + ShapeToString(shape));
  }
  const std::size_t plane = shape[1] * shape[2];
  std::vector<double> out(ShapeSize(shape));
  for (std::size_t c = 0; c < shape[0]; ++c) {
    std::fill_n(out.begin() + c * plane, plane, b.value()[c]);
  }
  return b.tape().Record("channel_broadcast",
                         MakeTensorUnchecked(shape, std::move(out)), {b},
                         [](const Var& g) {
                           return std::vector<Var>{ChannelSum(g)};
                         });
}

Var ChannelSum(const Var& g) {
  RequireRank("channel_sum", g, 3);
  const Shape shape = g.shape();
  const std::size_t plane = shape[1] * shape[2];
  std::vector<double> out(shape[0], 0.0);
  auto gd = g.value().data();
  for (std::size_t c = 0; c < shape[0]; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += gd[c * plane + i];
    out[c] = acc;
  }
  return g.tape().Record("channel_sum",
                         MakeTensorUnchecked({shape[0]}, std::move(out)), {g},
                         [shape](const Var& u) {
                           return std::vector<Var>{ChannelBroadcast(u, shape)};
                         });
}

Var AvgPool2(const Var& x) {
  RequireRank("avg_pool2", x, 3);
  const Shape in = x.shape();
  if (in[1] < 2 || in[2] < 2) {
    throw ShapeError("avg_pool2: input " + ShapeToString(in) +
                     " smaller than the 2x2 window");
  }
  const std::size_t oh = in[1] / 2;
  const std::size_t ow = in[2] / 2;
  std::vector<double> out(in[0] * oh * ow);
  auto xd = x.value().data();
  for (std::size_t c = 0; c < in[0]; ++c) {
    const std::size_t base = c * in[1] * in[2];
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        const std::size_t r0 = base + (2 * i) * in[2] + 2 * j;
        const std::size_t r1 = r0 + in[2];
        out[(c * oh + i) * ow + j] =
            0.25 * (xd[r0] + xd[r0 + 1] + xd[r1] + xd[r1 + 1]);
      }
    }
  }
  return x.tape().Record("avg_pool2",
                         MakeTensorUnchecked({in[0], oh, ow}, std::move(out)),
                         {x}, [in](const Var& g) {
                           return std::vector<Var>{AvgPool2Backward(g, in)};
                         });
}

Var AvgPool2Backward(const Var& g, const Shape& input_shape) {
  const Shape& in = input_shape;
  const std::size_t oh = in[1] / 2;
  const std::size_t ow = in[2] / 2;
  if (g.shape() != Shape{in[0], oh, ow}) {
    throw ShapeError("avg_pool2_backward: upstream " +
                     ShapeToString(g.shape()) + " does not match input " +
                     ShapeToString(in));
  }
  std::vector<double> out(ShapeSize(in), 0.0);
  auto gd = g.value().data();
  for (std::size_t c = 0; c < in[0]; ++c) {
    const std::size_t base = c * in[1] * in[2];
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        const double v = 0.25 * gd[(c * oh + i) * ow + j];
        const std::size_t r0 = base + (2 * i) * in[2] + 2 * j;
        const std::size_t r1 = r0 + in[2];
        out[r0] = v;
        out[r0 + 1] = v;
        out[r1] = v;
        out[r1 + 1] = v;
      }
    }
  }
  return g.tape().Record("avg_pool2_backward",
                         MakeTensorUnchecked(in, std::move(out)), {g},
                         [](const Var& u) {
                           return std::vector<Var>{AvgPool2(u)};
                         });
}

}  // namespace fedval::autodiff
