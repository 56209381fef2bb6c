// Copyright 2026 The WarpAdapt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>

#include "support/test_util.hpp"
#include "warpadapt/ops.hpp"
#include "warpadapt/parallel.hpp"

namespace warpadapt {
namespace {

using testing::gradient_error;
using testing::random_tensor;
using testing::weighted_sum;

// Direct summation, no im2col.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor* b, const ConvGeometry& g) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), k = w.dim(2);
  const std::size_t OH = conv_output_extent(H, k, g), OW = conv_output_extent(W, k, g);
  Tensor out({B, O, OH, OW});
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t oh = 0; oh < OH; ++oh)
        for (std::size_t ow = 0; ow < OW; ++ow) {
          double acc = b ? (*b)[o] : 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < k; ++i)
              for (std::size_t j = 0; j < k; ++j) {
                const long y = static_cast<long>(oh) * g.stride - g.padding + static_cast<long>(i) * g.dilation;
                const long xx = static_cast<long>(ow) * g.stride - g.padding + static_cast<long>(j) * g.dilation;
                if (y < 0 || xx < 0 || y >= static_cast<long>(H) || xx >= static_cast<long>(W)) continue;
                acc += w.at(o, c, i, j) * x.at(n, c, static_cast<std::size_t>(y), static_cast<std::size_t>(xx));
              }
          out.at(n, o, oh, ow) = acc;
        }
  return out;
}

Tensor run_conv(const Tensor& x, const Tensor& w, const Tensor& b, const ConvGeometry& g) {
  Tape tape(Tape::Mode::kInference);
  return conv2d(tape, Variable(x), Variable(w), Variable(b), g).value();
}

TEST(Conv2d, DeltaKernelIsIdentity) {
  Rng rng(1);
  const Tensor x = random_tensor({2, 1, 6, 7}, rng);
  Tensor w({1, 1, 3, 3}, 0.0);
  w.at(0, 0, 1, 1) = 1.0;
  const Tensor out = run_conv(x, w, Tensor({1}, 0.0), {1, 1, 1});
  EXPECT_TRUE(out.bitwise_equal(x));
}

TEST(Conv2d, AllOnesKernelOnConstantInput) {
  const Tensor out = run_conv(Tensor({1, 1, 5, 5}, 1.0), Tensor({1, 1, 3, 3}, 1.0), Tensor({1}, 0.0), {1, 1, 0});
  ASSERT_EQ(out.shape(), (Shape{1, 1, 3, 3}));
  for (double v : out.data()) EXPECT_EQ(v, 9.0);
}

TEST(Conv2d, MatchesQuadrupleLoopOracle) {
  Rng rng(2);
  const Tensor x = random_tensor({1, 1, 5, 5}, rng);
  const Tensor w = random_tensor({1, 1, 3, 3}, rng);
  const Tensor b = random_tensor({1}, rng);
  EXPECT_LE(max_abs_diff(run_conv(x, w, b, {1, 1, 0}), naive_conv(x, w, &b, {1, 1, 0})), 1e-12);
}

TEST(Conv2d, MatchesOracleAcrossGeometries) {
  Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t k = 1 + 2 * static_cast<std::size_t>(rng.uniform_int(0, 2));
    const ConvGeometry g{static_cast<int>(rng.uniform_int(1, 2)), static_cast<int>(rng.uniform_int(1, 3)),
                         static_cast<int>(rng.uniform_int(0, 2))};
    const std::size_t reach = (k - 1) * g.dilation + 1;
    const std::size_t H = reach + static_cast<std::size_t>(rng.uniform_int(0, 5));
    const std::size_t W = reach + static_cast<std::size_t>(rng.uniform_int(0, 5));
    const Tensor x = random_tensor({2, 3, H, W}, rng);
    const Tensor w = random_tensor({4, 3, k, k}, rng);
    const Tensor b = random_tensor({4}, rng);
    EXPECT_LE(max_abs_diff(run_conv(x, w, b, g), naive_conv(x, w, &b, g)), 1e-12) << "trial " << trial;
  }
}

TEST(Conv2d, DilationEqualsZeroInflatedKernel) {
  Rng rng(4);
  for (int d = 2; d <= 3; ++d) {
    const Tensor x = random_tensor({1, 2, 11, 12}, rng);
    const Tensor w = random_tensor({3, 2, 3, 3}, rng);
    const Tensor b = random_tensor({3}, rng);
    const std::size_t kk = 2 * d + 1;
    Tensor inflated({3, 2, kk, kk}, 0.0);
    for (std::size_t o = 0; o < 3; ++o)
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 3; ++i)
          for (std::size_t j = 0; j < 3; ++j) inflated.at(o, c, i * d, j * d) = w.at(o, c, i, j);
    const Tensor a = run_conv(x, w, b, {1, d, d});
    const Tensor e = run_conv(x, inflated, b, {1, 1, d});
    EXPECT_LE(max_abs_diff(a, e), 1e-12);
  }
}

TEST(Conv2d, RejectsEvenKernelAndShapeMismatch) {
  Tape tape;
  EXPECT_THROW(conv2d(tape, Variable(Tensor({1, 1, 5, 5})), Variable(Tensor({1, 1, 2, 2})), Variable(), {}),
               std::invalid_argument);
  EXPECT_THROW(conv2d(tape, Variable(Tensor({1, 2, 5, 5})), Variable(Tensor({1, 3, 3, 3})), Variable(), {}),
               std::invalid_argument);
  EXPECT_THROW(conv2d(tape, Variable(Tensor({1, 1, 2, 2})), Variable(Tensor({1, 1, 3, 3})), Variable(), {1, 1, 0}),
               std::invalid_argument);
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
  Rng rng(5);
  for (int trial = 0; trial < 6; ++trial) {
    const ConvGeometry g{static_cast<int>(rng.uniform_int(1, 2)), static_cast<int>(rng.uniform_int(1, 2)), 1};
    Variable x(random_tensor({2, 2, 7, 6}, rng), true);
    Variable w(random_tensor({3, 2, 3, 3}, rng), true);
    Variable b(random_tensor({3}, rng), true);
    Tensor r;
    auto loss = [&](Tape& tape) {
      Variable y = conv2d(tape, x, w, b, g);
      if (r.empty()) r = random_tensor(y.shape(), rng);
      return weighted_sum(tape, y, r);
    };
    EXPECT_LE(gradient_error(loss, x), 1e-3);
    EXPECT_LE(gradient_error(loss, w), 1e-3);
    EXPECT_LE(gradient_error(loss, b), 1e-3);
  }
}

TEST(Conv2d, ParallelBatchIsBitwiseScheduleIndependent) {
  Rng rng(6);
  const Tensor xv = random_tensor({5, 3, 9, 9}, rng);
  const Tensor wv = random_tensor({4, 3, 3, 3}, rng);
  const Tensor r = random_tensor({5, 4, 9, 9}, rng);
  auto run = [&](std::size_t threads, Tensor& out, Tensor& gw) {
    set_max_threads(threads);
    Variable x(xv, true);
    Variable w(wv, true);
    Tape tape;
    Variable y = conv2d(tape, x, w, Variable(), {1, 1, 1});
    Variable l = weighted_sum(tape, y, r);
    tape.backward(l);
    out = y.value();
    gw = w.grad();
  };
  Tensor y1, g1, y3, g3;
  run(1, y1, g1);
  run(3, y3, g3);
  set_max_threads(1);
  EXPECT_TRUE(y1.bitwise_equal(y3));
  EXPECT_TRUE(g1.bitwise_equal(g3));
}

// ---------------------------------------------------------------------------

double sample_at(const Tensor& map, double u, double v) {
  Tape tape(Tape::Mode::kInference);
  return bilinear_sample(tape, Variable(map), Variable(Tensor({1}, u)), Variable(Tensor({1}, v))).value()[0];
}

TEST(BilinearSample, LatticePointsReturnPixels) {
  Rng rng(7);
  const Tensor map = random_tensor({1, 4, 5}, rng);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 5; ++x) EXPECT_EQ(sample_at(map, x, y), map[y * 5 + x]);
}

TEST(BilinearSample, MidpointAveragesFourPixels) {
  const Tensor map({1, 2, 2}, {0.0, 1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(sample_at(map, 0.5, 0.5), 1.5);
}

TEST(BilinearSample, FarOutsideIsZero) {
  const Tensor map({1, 2, 2}, {0.0, 1.0, 2.0, 3.0});
  EXPECT_EQ(sample_at(map, -5.0, -5.0), 0.0);
  EXPECT_EQ(sample_at(map, 1e300, -1e300), 0.0);
}

TEST(BilinearSample, PartialOverlapUsesZeroPadding) {
  const Tensor map({1, 2, 2}, {4.0, 8.0, 12.0, 16.0});
  // Half a pixel left of column 0: only the in-bounds neighbors count.
  EXPECT_DOUBLE_EQ(sample_at(map, -0.5, 0.0), 2.0);
}

TEST(BilinearSample, IsLipschitzContinuous) {
  Rng rng(8);
  const double eps = 1e-6;
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor map = random_tensor({1, 6, 7}, rng);
    double lip = 0.0;
    for (double x : map.data()) lip = std::max(lip, std::abs(x));
    lip *= 2.0;  // |d sample / du| <= max |m01 - m00|
    const double u = rng.uniform(-2.0, 8.0);
    const double v = rng.uniform(-2.0, 7.0);
    EXPECT_LE(std::abs(sample_at(map, u + eps, v) - sample_at(map, u, v)), lip * eps * (1 + 1e-9));
    EXPECT_LE(std::abs(sample_at(map, u, v + eps) - sample_at(map, u, v)), lip * eps * (1 + 1e-9));
  }
}

TEST(BilinearSample, GradientsForMapAndCoordinates) {
  Rng rng(9);
  int checked = 0;
  while (checked < 20) {
    const double u0 = rng.uniform(-1.0, 5.0);
    const double v0 = rng.uniform(-1.0, 4.0);
    if (testing::lattice_distance(u0) < 1e-3 || testing::lattice_distance(v0) < 1e-3) continue;
    Variable map(random_tensor({3, 4, 5}, rng), true);
    Variable u(Tensor({1}, u0), true);
    Variable v(Tensor({1}, v0), true);
    const Tensor r = random_tensor({3}, rng);
    auto loss = [&](Tape& tape) { return weighted_sum(tape, bilinear_sample(tape, map, u, v), r); };
    EXPECT_LE(gradient_error(loss, map), 1e-3);
    EXPECT_LE(gradient_error(loss, u), 1e-3);
    EXPECT_LE(gradient_error(loss, v), 1e-3);
    ++checked;
  }
}

// ---------------------------------------------------------------------------

TEST(BatchNorm, TrainingNormalizesPerChannel) {
  Rng rng(10);
  // Wide spread so eps = 1e-5 moves the variance by well under 1e-6.
  const Tensor x = random_tensor({4, 3, 5, 6}, rng, -10.0, 20.0);
  BNState state = BNState::fresh(3);
  Tape tape;
  const Tensor y = batchnorm2d(tape, Variable(x), Variable(Tensor({3}, 1.0)), Variable(Tensor({3}, 0.0)), state, true).value();
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0.0, q = 0.0;
    const double m = 4.0 * 30.0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 30; ++i) s += y[(n * 3 + c) * 30 + i];
    const double mean = s / m;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 30; ++i) q += std::pow(y[(n * 3 + c) * 30 + i] - mean, 2);
    EXPECT_LE(std::abs(mean), 1e-9);
    EXPECT_NEAR(q / m, 1.0, 1e-6);
  }
}

TEST(BatchNorm, EvalModeIsAffineOfRunningStatistics) {
  Rng rng(11);
  const Tensor x = random_tensor({2, 2, 3, 3}, rng);
  BNState state = BNState::fresh(2);
  state.running_mean = Tensor({2}, {0.3, -0.2});
  state.running_var = Tensor({2}, {0.5, 2.0});
  const Tensor gamma({2}, {1.5, -0.5});
  const Tensor beta({2}, {0.1, 0.2});
  Tape tape;
  const Tensor y = batchnorm2d(tape, Variable(x), Variable(gamma), Variable(beta), state, false).value();
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < 9; ++i) {
        const std::size_t k = (n * 2 + c) * 9 + i;
        const double expect =
            (x[k] - state.running_mean[c]) * (1.0 / std::sqrt(state.running_var[c] + state.eps)) * gamma[c] + beta[c];
        EXPECT_NEAR(y[k], expect, 1e-14);  // FMA contraction may differ by an ulp
      }
}

TEST(BatchNorm, RunningStatisticsFollowMomentum) {
  const Tensor x({2, 1, 1, 2}, {1.0, 2.0, 3.0, 6.0});
  BNState state = BNState::fresh(1);
  Tape tape;
  batchnorm2d(tape, Variable(x), Variable(Tensor({1}, 1.0)), Variable(Tensor({1}, 0.0)), state, true);
  // mean 3, unbiased var (4+1+0+9)/3
  EXPECT_DOUBLE_EQ(state.running_mean[0], 0.1 * 3.0);
  EXPECT_DOUBLE_EQ(state.running_var[0], 0.9 + 0.1 * 14.0 / 3.0);
}

TEST(BatchNorm, RejectsSingleValueInTraining) {
  BNState state = BNState::fresh(1);
  Tape tape;
  EXPECT_THROW(batchnorm2d(tape, Variable(Tensor({1, 1, 1, 1})), Variable(Tensor({1}, 1.0)),
                           Variable(Tensor({1}, 0.0)), state, true),
               std::invalid_argument);
}

TEST(BatchNorm, GradientsMatchFiniteDifferences) {
  Rng rng(12);
  for (bool training : {true, false}) {
    Variable x(random_tensor({3, 2, 4, 3}, rng), true);
    Variable gamma(random_tensor({2}, rng, 0.5, 1.5), true);
    Variable beta(random_tensor({2}, rng), true);
    const Tensor r = random_tensor({3, 2, 4, 3}, rng);
    BNState base = BNState::fresh(2);
    base.running_mean = random_tensor({2}, rng);
    base.running_var = random_tensor({2}, rng, 0.5, 2.0);
    auto loss = [&](Tape& tape) {
      BNState state = base;  // running statistics must not drift between evaluations
      return weighted_sum(tape, batchnorm2d(tape, x, gamma, beta, state, training), r);
    };
    EXPECT_LE(gradient_error(loss, gamma), 1e-4) << "training=" << training;
    EXPECT_LE(gradient_error(loss, beta), 1e-4);
    EXPECT_LE(gradient_error(loss, x), 1e-3);
  }
}

// ---------------------------------------------------------------------------

TEST(Elementwise, ReluDefinition) {
  Tape tape;
  const Tensor y = relu(tape, Variable(Tensor({2}, {-1.0, 2.0}))).value();
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 2.0);
}

TEST(Elementwise, UpsampleOfConstantIsConstant) {
  Tape tape;
  const Tensor y = upsample_bilinear2x(tape, Variable(Tensor({2, 3, 4, 5}, 0.75))).value();
  ASSERT_EQ(y.shape(), (Shape{2, 3, 8, 10}));
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 0.75);
}

TEST(Elementwise, UpsampleUsesHalfPixelCenters) {
  Tape tape;
  const Tensor y = upsample_bilinear2x(tape, Variable(Tensor({1, 1, 1, 2}, {0.0, 4.0}))).value();
  // Output centers at input coordinates -0.25, 0.25, 0.75, 1.25, clamped.
  EXPECT_DOUBLE_EQ(y[0], 0.0);
  EXPECT_DOUBLE_EQ(y[1], 1.0);
  EXPECT_DOUBLE_EQ(y[2], 3.0);
  EXPECT_DOUBLE_EQ(y[3], 4.0);
}

TEST(Elementwise, SoftmaxOfUniformLogits) {
  Tape tape;
  const Tensor y = softmax(tape, Variable(Tensor({2, 5, 1, 3}, 0.3))).value();
  for (double v : y.data()) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST(Elementwise, ShapeMismatchThrows) {
  Tape tape;
  EXPECT_THROW(add(tape, Variable(Tensor({2, 3})), Variable(Tensor({3, 2}))), std::invalid_argument);
  EXPECT_THROW(mul(tape, Variable(Tensor({2})), Variable(Tensor({3}))), std::invalid_argument);
  EXPECT_THROW(reshape(tape, Variable(Tensor({2, 3})), {4}), std::invalid_argument);
  EXPECT_THROW(concat_channels(tape, Variable(Tensor({1, 1, 2, 2})), Variable(Tensor({1, 1, 2, 3}))),
               std::invalid_argument);
}

TEST(Elementwise, GradientsMatchFiniteDifferences) {
  Rng rng(13);
  Variable a(random_tensor({2, 3, 4, 4}, rng), true);
  Variable b(random_tensor({2, 3, 4, 4}, rng), true);
  Variable c(random_tensor({2, 2, 4, 4}, rng), true);
  // Keep relu inputs away from its kink.
  for (double& x : a.value().data()) x += x >= 0 ? 0.05 : -0.05;
  const Tensor r8 = random_tensor({2, 3, 8, 8}, rng);
  const Tensor r4 = random_tensor({2, 3, 4, 4}, rng);
  const Tensor rc = random_tensor({2, 5, 4, 4}, rng);
  const Tensor r48 = random_tensor({48, 2}, rng);

  EXPECT_LE(gradient_error([&](Tape& t) { return weighted_sum(t, relu(t, a), r4); }, a), 1e-3);
  EXPECT_LE(gradient_error([&](Tape& t) { return weighted_sum(t, upsample_bilinear2x(t, a), r8); }, a), 1e-3);
  EXPECT_LE(gradient_error([&](Tape& t) { return weighted_sum(t, softmax(t, a), r4); }, a), 1e-3);
  EXPECT_LE(gradient_error([&](Tape& t) { return weighted_sum(t, add(t, a, b), r4); }, b), 1e-3);
  EXPECT_LE(gradient_error([&](Tape& t) { return weighted_sum(t, mul(t, a, b), r4); }, a), 1e-3);
  EXPECT_LE(gradient_error([&](Tape& t) { return weighted_sum(t, scale(t, a, -2.5), r4); }, a), 1e-3);
  EXPECT_LE(gradient_error([&](Tape& t) { return weighted_sum(t, reshape(t, a, {48, 2}), r48); }, a), 1e-3);
  EXPECT_LE(gradient_error([&](Tape& t) { return weighted_sum(t, concat_channels(t, a, c), rc); }, c), 1e-3);
  EXPECT_LE(gradient_error([&](Tape& t) { return weighted_sum(t, concat_channels(t, a, c), rc); }, a), 1e-3);
}

// ---------------------------------------------------------------------------

TEST(Tape, SecondBackwardIsRejected) {
  Variable x(Tensor({3}, 1.0), true);
  Tape tape;
  Variable l = sum(tape, x);
  tape.backward(l);
  EXPECT_THROW(tape.backward(l), std::logic_error);
}

TEST(Tape, EachGradientAccumulatesOncePerPass) {
  Variable x(Tensor({2}, {1.0, 2.0}), true);
  Tape tape;
  Variable l = sum(tape, mul(tape, x, x));
  tape.backward(l);
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], 4.0);
}

TEST(Tape, InferenceModeRecordsNothing) {
  Variable x(Tensor({2}, 1.0), true);
  Tape tape(Tape::Mode::kInference);
  sum(tape, relu(tape, x));
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Tape, NonFiniteInputsAreRejected) {
  Tape tape;
  Tensor x({2}, 1.0);
  x[1] = std::nan("");
  EXPECT_THROW(relu(tape, Variable(x)), NumericalError);
}

TEST(Tape, ForwardAndBackwardAreDeterministic) {
  Rng rng(14);
  const Tensor xv = random_tensor({2, 2, 6, 6}, rng);
  const Tensor wv = random_tensor({2, 2, 3, 3}, rng);
  const Tensor r = random_tensor({2, 2, 6, 6}, rng);
  Tensor first;
  for (int i = 0; i < 2; ++i) {
    Variable w(wv, true);
    Tape tape;
    Variable l = weighted_sum(tape, relu(tape, conv2d(tape, Variable(xv), w, Variable(), {1, 1, 1})), r);
    tape.backward(l);
    if (i == 0) first = w.grad();
    else EXPECT_TRUE(first.bitwise_equal(w.grad()));
  }
}

}  // namespace
}  // namespace warpadapt
