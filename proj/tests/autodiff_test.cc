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
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "fedval/autodiff/gradients.h"
#include "fedval/autodiff/ops.h"
#include "fedval/autodiff/tape.h"
#include "fedval/util/errors.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace fedval {
namespace {

using autodiff::Tape;
using autodiff::Var;
using testing::MaxRelativeError;
using testing::RandomParams;
using testing::RandomTensor;
using testing::SmallSpecs;

// l = (w x - t)^2 / 2 with scalar w, x and fixed target t.
LossProgram SquaredLossProgram(double target) {
  return [target](std::span<const Var> p, const Var& x) {
    Var r = autodiff::AddScalar(autodiff::Mul(p[0], x), -target);
    return autodiff::Scale(autodiff::Mul(r, r), 0.5);
  };
}

ModelSpec LinearSpec(Shape input, std::size_t classes) {
  return ModelSpec::Mlp(std::move(input), {}, classes);
}

TEST(TensorTest, RejectsNonFiniteAndBadShapes) {
  EXPECT_THROW(Tensor({2}, {1.0, std::nan("")}), NumericError);
  EXPECT_THROW(Tensor({2}, {1.0, std::numeric_limits<double>::infinity()}),
               NumericError);
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  EXPECT_THROW(Tensor({0}), ShapeError);
  Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_THROW(t.Reshaped({4}), ShapeError);
}

TEST(ParamLayoutTest, OffsetsMustPartition) {
  EXPECT_THROW(ParamLayout({{"a", 0, {2}}, {"b", 3, {1}}}), ShapeError);
  ParamLayout ok({{"a", 0, {2}}, {"b", 2, {3}}});
  EXPECT_EQ(ok.total_size(), 5u);
  EXPECT_EQ(ok.Find("b"), 1u);
}

TEST(PerSampleLossTest, UniformLogitsGiveLogClassCount) {
  ModelSpec spec = LinearSpec({1, 2, 2}, 10);
  ParamVector zero = ParamVector::Zeros(spec.Layout());
  std::mt19937_64 rng(1);
  for (std::size_t label : {0u, 3u, 9u}) {
    Tensor x = RandomTensor({1, 2, 2}, rng);
    EXPECT_NEAR(PerSampleLoss(zero, spec, x, label), std::log(10.0), 1e-12);
  }
}

TEST(PerSampleLossTest, SaturatedMarginGivesNearZeroLoss) {
  ModelSpec spec = LinearSpec({1, 1, 1}, 3);
  ParamVector p = ParamVector::Zeros(spec.Layout());
  // Bias puts a margin of 20 on class 1.
  p.mutable_block(1)[1] = 20.0;
  EXPECT_LE(PerSampleLoss(p, spec, Tensor({1, 1, 1}), 1), 1e-6);
}

TEST(PerSampleLossTest, TwoClassLinearHandCase) {
  // Logits [w.x, 0] with w = [1, -1], x = [1, 0].
  ModelSpec spec = LinearSpec({1, 1, 2}, 2);
  ParamVector p = ParamVector::Zeros(spec.Layout());
  auto w = p.mutable_block(0);
  w[0] = 1.0;
  w[1] = -1.0;
  const double loss = PerSampleLoss(p, spec, Tensor({1, 1, 2}, {1.0, 0.0}), 0);
  EXPECT_NEAR(loss, std::log1p(std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(loss, 0.313262, 1e-6);
}

TEST(PerSampleLossTest, ShapeMismatchNamesBothShapes) {
  ModelSpec spec = LinearSpec({1, 2, 2}, 2);
  ParamVector p = ParamVector::Zeros(spec.Layout());
  try {
    PerSampleLoss(p, spec, Tensor({1, 3, 3}), 0);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[1,2,2]"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[1,3,3]"), std::string::npos);
  }
  EXPECT_THROW(PerSampleLoss(p, spec, Tensor({1, 2, 2}), 2), ConfigError);
}

TEST(GradParamsTest, ZeroModelZeroInputOnlyBiasGradient) {
  ModelSpec spec = LinearSpec({1, 2, 2}, 3);
  ParamVector zero = ParamVector::Zeros(spec.Layout());
  ParamVector g = GradParams(zero, spec, Tensor({1, 2, 2}), 1);
  for (double v : g.block(0)) EXPECT_EQ(v, 0.0);
  double bias_norm = 0.0;
  for (double v : g.block(1)) bias_norm += v * v;
  EXPECT_GT(bias_norm, 0.0);
  // softmax(0) - onehot(1)
  EXPECT_NEAR(g.block(1)[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(g.block(1)[1], 1.0 / 3.0 - 1.0, 1e-15);
}

TEST(GradParamsTest, MatchesCentralDifferences) {
  std::mt19937_64 rng(7);
  for (Activation act :
       {Activation::kTanh, Activation::kSoftplus, Activation::kRelu}) {
    for (const ModelSpec& spec : SmallSpecs(act)) {
      for (int rep = 0; rep < 3; ++rep) {
        ParamVector p = RandomParams(spec, rng);
        Tensor x = RandomTensor(spec.input_shape, rng, 0.0, 1.0);
        const std::size_t label = rng() % spec.num_classes;
        ParamVector g = GradParams(p, spec, x, label);
        Tensor flat({p.size()}, std::vector<double>(p.data().begin(),
                                                    p.data().end()));
        Tensor fd = FiniteDiff(
            [&](const Tensor& q) {
              return PerSampleLoss(ParamVector(p.layout_ptr(), q.vec()), spec,
                                   x, label);
            },
            flat, 1e-5);
        EXPECT_LE(MaxRelativeError(g.data(), fd.data()), 1e-6)
            << ToString(act) << " " << spec.ToJson().dump();
      }
    }
  }
}

TEST(GradParamsTest, DuplicatedSampleAverageEqualsSingle) {
  std::mt19937_64 rng(3);
  const ModelSpec spec = SmallSpecs(Activation::kTanh)[2];
  ParamVector p = RandomParams(spec, rng);
  Tensor x = RandomTensor(spec.input_shape, rng, 0.0, 1.0);
  ParamVector a = GradParams(p, spec, x, 1);
  ParamVector avg = a;
  avg += GradParams(p, spec, x, 1);
  avg *= 0.5;
  EXPECT_EQ(avg, a);
}

TEST(GradInputTest, MatchesCentralDifferences) {
  std::mt19937_64 rng(11);
  for (Activation act :
       {Activation::kTanh, Activation::kSoftplus, Activation::kRelu}) {
    for (const ModelSpec& spec : SmallSpecs(act)) {
      for (int rep = 0; rep < 3; ++rep) {
        ParamVector p = RandomParams(spec, rng);
        Tensor x = RandomTensor(spec.input_shape, rng, 0.0, 1.0);
        const std::size_t label = rng() % spec.num_classes;
        Tensor g = GradInput(p, spec, x, label);
        Tensor fd = FiniteDiff(
            [&](const Tensor& q) { return PerSampleLoss(p, spec, q, label); },
            x, 1e-5);
        EXPECT_EQ(g.shape(), x.shape());
        EXPECT_LE(MaxRelativeError(g.data(), fd.data()), 1e-6);
      }
    }
  }
}

TEST(GradInputTest, SaturatedPredictionHasFlatInputGradient) {
  ModelSpec spec = LinearSpec({1, 1, 2}, 2);
  ParamVector p = ParamVector::Zeros(spec.Layout());
  auto w = p.mutable_block(0);
  w[0] = 20.0;
  w[1] = 20.0;
  Tensor x({1, 1, 2}, {1.0, 1.0});  // margin 40 on class 0
  EXPECT_LE(GradInput(p, spec, x, 0).Norm(), 1e-6);
}

TEST(GradInputTest, SquaredLossHandCase) {
  // dl/dx = (w x - t) w = 4 at w = 2, x = 1, t = 0.
  std::vector<Tensor> params = {Tensor::Scalar(2.0)};
  Tensor g = ProgramGradInput(SquaredLossProgram(0.0), params,
                              Tensor::Scalar(1.0));
  EXPECT_DOUBLE_EQ(g.item(), 4.0);
}

TEST(NestedGradTest, SquaredLossHandCase) {
  // g(x) = ((w x - t) x)^2, dg/dx = 2(wx-t)w x^2 + (wx-t)^2 2x = 4 at w=1,
  // x=1, t=0.
  std::vector<Tensor> params = {Tensor::Scalar(1.0)};
  Tensor g = ProgramGradInputOfSqParamGradNorm(SquaredLossProgram(0.0), params,
                                               Tensor::Scalar(1.0));
  EXPECT_NEAR(g.item(), 4.0, 1e-12);
}

TEST(NestedGradTest, MatchesFiniteDifferencesOfSquaredGradNorm) {
  std::mt19937_64 rng(5);
  for (Activation act : {Activation::kTanh, Activation::kSoftplus}) {
    for (const ModelSpec& spec : SmallSpecs(act)) {
      for (int rep = 0; rep < 2; ++rep) {
        ParamVector p = RandomParams(spec, rng);
        Tensor x = RandomTensor(spec.input_shape, rng, 0.0, 1.0);
        const std::size_t label = rng() % spec.num_classes;
        Tensor exact = GradInputOfSqParamGradNorm(p, spec, x, label);
        Tensor fd = FiniteDiff(
            [&](const Tensor& q) {
              return GradParams(p, spec, q, label).SquaredNorm();
            },
            x, 1e-4);
        EXPECT_LE(MaxRelativeError(exact.data(), fd.data()), 1e-4);
        // The selectable fallback path is the same oracle.
        Tensor fallback = GradInputOfSqParamGradNorm(
            p, spec, x, label, NestedMode::kFiniteDifference);
        EXPECT_LE(MaxRelativeError(exact.data(), fallback.data()), 1e-4);
      }
    }
  }
}

TEST(NestedGradTest, SaturatedSampleVanishes) {
  ModelSpec spec = ModelSpec::Mlp({1, 1, 2}, {2}, 2, Activation::kTanh);
  ParamVector p = ParamVector::Zeros(spec.Layout());
  auto w1 = p.mutable_block(0);
  for (double& v : w1) v = 0.5;
  auto w2 = p.mutable_block(2);
  w2[0] = 20.0;
  w2[1] = 20.0;
  w2[2] = -20.0;
  w2[3] = -20.0;
  Tensor x({1, 1, 2}, {1.0, 1.0});
  EXPECT_LE(GradInputOfSqParamGradNorm(p, spec, x, 0).Norm(), 1e-5);
}

TEST(NestedGradTest, ReluIsRejectedNamingTheOp) {
  std::mt19937_64 rng(2);
  const ModelSpec spec = SmallSpecs(Activation::kRelu)[0];
  ParamVector p = RandomParams(spec, rng);
  Tensor x = RandomTensor(spec.input_shape, rng);
  try {
    GradInputOfSqParamGradNorm(p, spec, x, 0);
    FAIL() << "expected UnsupportedOpError";
  } catch (const UnsupportedOpError& e) {
    EXPECT_NE(std::string(e.what()).find("relu"), std::string::npos);
  }
}

TEST(TapeTest, CreateGraphThroughReluFailsAtTheOp) {
  Tape tape;
  Var w = tape.Leaf(Tensor::Scalar(0.5), true);
  Var x = tape.Leaf(Tensor::Scalar(2.0), true);
  Var y = autodiff::Relu(autodiff::Mul(w, x));
  std::vector<Var> wrt = {w};
  EXPECT_NO_THROW(tape.Gradients(y, wrt, false));
  EXPECT_THROW(tape.Gradients(y, wrt, true), UnsupportedOpError);
}

TEST(TapeTest, NonFiniteIntermediateNamesLayer) {
  ModelSpec spec = ModelSpec::Mlp({1, 1, 2}, {2}, 2);
  ParamVector p = ParamVector::Zeros(spec.Layout());
  for (double& v : p.mutable_block(0)) v = 1e300;
  Tensor x({1, 1, 2}, {1e300, 1e300});
  try {
    GradParams(p, spec, x, 0);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("fc0"), std::string::npos) << e.what();
  }
}

TEST(GradientLinearityTest, ScalingTheLossScalesGradients) {
  std::mt19937_64 rng(13);
  const ModelSpec spec = SmallSpecs(Activation::kSoftplus)[2];
  ParamVector p = RandomParams(spec, rng);
  Tensor x = RandomTensor(spec.input_shape, rng, 0.0, 1.0);
  std::vector<Tensor> blocks;
  for (std::size_t i = 0; i < p.layout().blocks().size(); ++i) {
    blocks.push_back(p.BlockTensor(i));
  }
  auto program = [&](double c) -> LossProgram {
    return [&spec, c](std::span<const Var> params, const Var& input) {
      Var logits = Forward(spec, params, input);
      Var ce = autodiff::Sub(autodiff::LogSumExp(logits),
                             autodiff::Pick(logits, 2));
      return autodiff::Scale(ce, c);
    };
  };
  const double c = 3.5;
  auto base = ProgramGradParams(program(1.0), blocks, x);
  auto scaled = ProgramGradParams(program(c), blocks, x);
  for (std::size_t i = 0; i < base.size(); ++i) {
    for (std::size_t k = 0; k < base[i].size(); ++k) {
      EXPECT_NEAR(scaled[i][k], c * base[i][k], 1e-12 * (1 + std::abs(scaled[i][k])));
    }
  }
  Tensor gi = ProgramGradInput(program(1.0), blocks, x);
  Tensor gs = ProgramGradInput(program(c), blocks, x);
  for (std::size_t k = 0; k < gi.size(); ++k) {
    EXPECT_NEAR(gs[k], c * gi[k], 1e-12 * (1 + std::abs(gs[k])));
  }
  // The program route agrees with the model route.
  ParamVector gp = GradParams(p, spec, x, 2);
  std::size_t off = 0;
  for (const Tensor& b : base) {
    for (std::size_t k = 0; k < b.size(); ++k) EXPECT_EQ(b[k], gp.data()[off + k]);
    off += b.size();
  }
}

TEST(DeterminismTest, RepeatedCallsAreBitIdentical) {
  std::mt19937_64 rng(17);
  const ModelSpec spec = SmallSpecs(Activation::kTanh)[3];
  ParamVector p = RandomParams(spec, rng);
  Tensor x = RandomTensor(spec.input_shape, rng, 0.0, 1.0);
  EXPECT_EQ(GradParams(p, spec, x, 1), GradParams(p, spec, x, 1));
  EXPECT_EQ(GradInput(p, spec, x, 1), GradInput(p, spec, x, 1));
  EXPECT_EQ(GradInputOfSqParamGradNorm(p, spec, x, 1),
            GradInputOfSqParamGradNorm(p, spec, x, 1));
}

TEST(FiniteDiffTest, QuadraticIsExact) {
  Tensor g = FiniteDiff([](const Tensor& x) { return x[0] * x[0]; },
                        Tensor::Scalar(3.0), 1e-5);
  EXPECT_NEAR(g.item(), 6.0, 1e-8);
}

TEST(FiniteDiffTest, SumGivesOnes) {
  std::mt19937_64 rng(1);
  Tensor x = RandomTensor({5}, rng);
  Tensor g = FiniteDiff(
      [](const Tensor& t) {
        double s = 0;
        for (double v : t.data()) s += v;
        return s;
      },
      x, 1e-5);
  for (double v : g.data()) EXPECT_NEAR(v, 1.0, 1e-9);
}

TEST(FiniteDiffTest, SquaredNorm) {
  Tensor g = FiniteDiff([](const Tensor& x) { return x.SquaredNorm(); },
                        Tensor({2}, {1.0, 2.0}), 1e-5);
  EXPECT_NEAR(g[0], 2.0, 1e-8);
  EXPECT_NEAR(g[1], 4.0, 1e-8);
}

}  // namespace
}  // namespace fedval
