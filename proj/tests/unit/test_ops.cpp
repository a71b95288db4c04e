#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "grad_cases.hpp"
#include "helpers.hpp"
#include "lenslearn/ops.hpp"

using namespace lenslearn;
using testing_util::random_tensor;

namespace {

template <typename T>
ops::ConvParams<T> conv_params(BasicTensor<T> k, BasicTensor<T> b, std::size_t stride, std::size_t pad) {
  return {std::move(k), std::move(b), stride, pad};
}

template <typename T>
double inner(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return ops::dot(a, b);
}

// With eps 1e-6 the 64-bit central difference carries ~2e-10 absolute
// rounding noise, so components near 1e-4 cannot be resolved to 1e-6
// relative. Tight checks use closed-form oracles instead.
constexpr double kFd64Bound = 1e-5;

}  // namespace

TEST(Conv2d, AllOnesSumsTheWindow) {
  Tensor x({1, 1, 3, 3}, 1.0f), k({1, 1, 3, 3}, 1.0f), b({1}, 0.0f);
  auto y = ops::conv2d_forward(x, conv_params(k, b, 1, 0));
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_FLOAT_EQ(y[0], 9.0f);

  auto padded = ops::conv2d_forward(x, conv_params(k, b, 1, 1));
  ASSERT_EQ(padded.shape(), (Shape{1, 1, 3, 3}));
  EXPECT_FLOAT_EQ(padded.at(0, 0, 1, 1), 9.0f);
  EXPECT_FLOAT_EQ(padded.at(0, 0, 0, 0), 4.0f);
  EXPECT_FLOAT_EQ(padded.at(0, 0, 0, 1), 6.0f);
}

TEST(Conv2d, DeltaKernelIsIdentity) {
  Rng rng(5);
  auto x = random_tensor<float>({2, 3, 6, 7}, rng);
  Tensor k({3, 3, 3, 3}, 0.0f), b({3}, 0.0f);
  for (std::size_t c = 0; c < 3; ++c) k.at(c, c, 1, 1) = 1.0f;
  auto y = ops::conv2d_forward(x, conv_params(k, b, 1, 1));
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Conv2d, OutputExtent) {
  EXPECT_EQ(ops::conv_output_extent(9, 3, 1, 0), 7u);
  EXPECT_EQ(ops::conv_output_extent(9, 3, 2, 1), 5u);
  EXPECT_EQ(ops::conv_output_extent(8, 3, 2, 1), 4u);
  EXPECT_EQ(ops::conv_output_extent(5, 1, 1, 0), 5u);
}

TEST(Conv2d, MatchesDirectSummationOnRandomShapes) {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(2), c = 1 + rng.below(3), o = 1 + rng.below(3);
    const std::size_t h = 1 + rng.below(9), w = 1 + rng.below(9);
    const std::size_t pad = rng.below(2), stride = 1 + rng.below(2);
    const std::size_t kmax = std::min(std::min(h, w) + 2 * pad, std::size_t{3});
    const std::size_t kh = 1 + rng.below(kmax), kw = 1 + rng.below(kmax);
    auto x = random_tensor<double>({n, c, h, w}, rng);
    auto k = random_tensor<double>({o, c, kh, kw}, rng);
    auto b = random_tensor<double>({o}, rng);
    const auto ref = testing_util::naive_conv(x, k, b, stride, pad);
    // abs-sum scale of each output: the reference with |x|, |k|, |b|
    auto ax = x, ak = k, ab = b;
    for (auto* t : {&ax, &ak, &ab})
      for (auto& v : t->data()) v = std::abs(v);
    const auto scale = testing_util::naive_conv(ax, ak, ab, stride, pad);

    auto y32 = ops::conv2d_forward(x.cast<float>(), conv_params(k.cast<float>(), b.cast<float>(), stride, pad));
    auto y64 = ops::conv2d_forward(x, conv_params(k, b, stride, pad));
    ASSERT_EQ(y32.shape(), ref.shape()) << "trial " << trial;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      EXPECT_LE(std::abs(y32[i] - ref[i]), 1e-5 * scale[i]) << "trial " << trial << " index " << i;
      EXPECT_LE(std::abs(y64[i] - ref[i]), 1e-12 * scale[i]) << "trial " << trial << " index " << i;
    }
  }
}

TEST(Conv2d, RejectsMismatchedShapes) {
  Tensor x({1, 2, 4, 4}), k({3, 1, 3, 3}), b({3});
  EXPECT_THROW(ops::conv2d_forward(x, conv_params(k, b, 1, 1)), DimensionError);
  Tensor k2({3, 2, 3, 3}), b2({2});
  EXPECT_THROW(ops::conv2d_forward(x, conv_params(k2, b2, 1, 1)), DimensionError);
  Tensor k5({1, 2, 5, 5}), b1({1});
  EXPECT_THROW(ops::conv2d_forward(x, conv_params(k5, b1, 1, 0)), DimensionError);
  EXPECT_THROW(ops::conv2d_forward(x, conv_params(k2, Tensor({3}), 0, 1)), DimensionError);
}

TEST(Conv2d, ZeroCotangentGivesZeroGradients) {
  Rng rng(8);
  auto x = random_tensor<float>({2, 2, 5, 5}, rng);
  auto p = conv_params(random_tensor<float>({3, 2, 3, 3}, rng), random_tensor<float>({3}, rng), 1, 1);
  auto g = ops::conv2d_backward(x, p, Tensor({2, 3, 5, 5}, 0.0f));
  for (const auto* t : {&g.input, &g.kernel, &g.bias})
    for (float v : t->data()) EXPECT_EQ(v, 0.0f);
}

TEST(Conv2d, ScalarCaseGradients) {
  // y = k x + b on 1x1 images: dy/dx = k, dy/dk = x, dy/db = 1
  Tensor x({1, 1, 1, 1}, 2.0f);
  auto p = conv_params(Tensor({1, 1, 1, 1}, 3.0f), Tensor({1}, 0.5f), 1, 0);
  EXPECT_FLOAT_EQ(ops::conv2d_forward(x, p)[0], 6.5f);
  auto g = ops::conv2d_backward(x, p, Tensor({1, 1, 1, 1}, 1.0f));
  EXPECT_FLOAT_EQ(g.input[0], 3.0f);
  EXPECT_FLOAT_EQ(g.kernel[0], 2.0f);
  EXPECT_FLOAT_EQ(g.bias[0], 1.0f);
}

TEST(Conv2d, StridedGradcheck) {
  Rng rng(21);
  const auto k = random_tensor<double>({2, 2, 3, 3}, rng);
  const auto b = random_tensor<double>({2}, rng);
  const auto x = random_tensor<double>({1, 2, 7, 6}, rng);
  ops::ForwardFn<double> f = [&](const Tensor64& in) { return ops::conv2d_forward(in, conv_params(k, b, 2, 1)); };
  ops::BackwardFn<double> bwd = [&](const Tensor64& in, const Tensor64& g) {
    return ops::conv2d_backward(in, conv_params(k, b, 2, 1), g).input;
  };
  const auto w = random_tensor<double>(f(x).shape(), rng, 0.5, 1.5);
  EXPECT_LT(ops::gradcheck(f, bwd, x, 1e-6, &w), kFd64Bound);
}

// Adjoint identities <F x, y> == <x, F^T y> for the linear ops.
TEST(Adjoint, ConvolutionWithoutBias) {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    auto x = random_tensor<double>({2, 3, 6, 5}, rng);
    auto p = conv_params(random_tensor<double>({4, 3, 3, 3}, rng), Tensor64({4}, 0.0), 1 + trial % 2, trial % 2);
    auto fx = ops::conv2d_forward(x, p);
    auto y = random_tensor<double>(fx.shape(), rng);
    const double lhs = inner(fx, y), rhs = inner(x, ops::conv2d_backward(x, p, y).input);
    EXPECT_LE(testing_util::rel_diff(lhs, rhs), 1e-5);
  }
}

TEST(Adjoint, MaxPoolWithFixedArgmax) {
  Rng rng(32);
  auto base = random_tensor<double>({2, 2, 4, 6}, rng);
  const auto argmax = ops::maxpool2x2_forward(base).argmax;
  // with the selection frozen, pooling is the gather x -> x[argmax]
  auto x = random_tensor<double>(base.shape(), rng);
  Tensor64 fx({2, 2, 2, 3});
  for (std::size_t i = 0; i < fx.size(); ++i) fx[i] = x[argmax[i]];
  auto y = random_tensor<double>(fx.shape(), rng);
  const double lhs = inner(fx, y), rhs = inner(x, ops::maxpool2x2_backward(y, argmax, x.shape()));
  EXPECT_LE(testing_util::rel_diff(lhs, rhs), 1e-5);
}

TEST(Adjoint, Upsample) {
  Rng rng(33);
  auto x = random_tensor<double>({2, 3, 3, 4}, rng);
  auto fx = ops::upsample2x_forward(x);
  auto y = random_tensor<double>(fx.shape(), rng);
  EXPECT_LE(testing_util::rel_diff(inner(fx, y), inner(x, ops::upsample2x_backward(y))), 1e-5);
}

TEST(Adjoint, Concat) {
  Rng rng(34);
  auto a = random_tensor<double>({2, 1, 3, 3}, rng), b = random_tensor<double>({2, 2, 3, 3}, rng);
  auto y = random_tensor<double>({2, 3, 3, 3}, rng);
  auto [ga, gb] = ops::split_channels(y, 1);
  const double lhs = inner(ops::concat_channels(a, b), y);
  EXPECT_LE(testing_util::rel_diff(lhs, inner(a, ga) + inner(b, gb)), 1e-5);
}

TEST(MaxPool, PicksWindowMaximum) {
  Tensor x({1, 1, 2, 4}, std::vector<float>{1, 2, 5, 0, 3, 4, -1, -2});
  auto r = ops::maxpool2x2_forward(x);
  ASSERT_EQ(r.output.shape(), (Shape{1, 1, 1, 2}));
  EXPECT_EQ(r.output[0], 4.0f);
  EXPECT_EQ(r.output[1], 5.0f);
  auto g = ops::maxpool2x2_backward(Tensor({1, 1, 1, 2}, std::vector<float>{10, 20}), r.argmax, x.shape());
  const std::vector<float> expected{0, 0, 20, 0, 0, 10, 0, 0};
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(g[i], expected[i]);
}

TEST(MaxPool, TiesGoToFirstElement) {
  Tensor x({1, 1, 2, 2}, 7.0f);
  auto r = ops::maxpool2x2_forward(x);
  EXPECT_EQ(r.argmax[0], 0u);
  auto g = ops::maxpool2x2_backward(Tensor({1, 1, 1, 1}, 1.0f), r.argmax, x.shape());
  EXPECT_EQ(g[0], 1.0f);
  EXPECT_EQ(g[1] + g[2] + g[3], 0.0f);
}

TEST(MaxPool, MatchesWindowOracleOnRandomInput) {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    auto x = testing_util::random_tensor<float>({1, 2, 8, 8}, rng);
    auto r = ops::maxpool2x2_forward(x);
    ASSERT_EQ(r.output.shape(), (Shape{1, 2, 4, 4}));
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t w = 0; w < 4; ++w) {
          float best = x.at(0, c, 2 * y, 2 * w);
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) best = std::max(best, x.at(0, c, 2 * y + dy, 2 * w + dx));
          ASSERT_EQ(r.output.at(0, c, y, w), best);
        }
  }
}

TEST(MaxPool, RejectsOddExtent) {
  EXPECT_THROW(ops::maxpool2x2_forward(Tensor({1, 1, 3, 4})), DimensionError);
  EXPECT_THROW(ops::maxpool2x2_forward(Tensor({1, 1, 4, 5})), DimensionError);
}

TEST(Upsample, ReplicatesAndSums) {
  Tensor x({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  auto y = ops::upsample2x_forward(x);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 4, 4}));
  const std::vector<float> expected{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(y[i], expected[i]);
  auto g = ops::upsample2x_backward(y);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(g[i], 4 * x[i]);
  EXPECT_THROW(ops::upsample2x_backward(Tensor({1, 1, 3, 4})), DimensionError);
}

TEST(BatchNorm, TrainModeStandardizesEachChannel) {
  Rng rng(41);
  auto x = random_tensor<double>({3, 2, 4, 5}, rng, -3, 7);
  auto s = ops::BatchNormState<double>::identity(2);
  auto y = ops::batchnorm_forward(x, s);
  for (std::size_t c = 0; c < 2; ++c) {
    double sum = 0, sq = 0;
    std::size_t m = 0;
    for (std::size_t n = 0; n < 3; ++n)
      for (std::size_t h = 0; h < 4; ++h)
        for (std::size_t w = 0; w < 5; ++w, ++m) {
          sum += y.at(n, c, h, w);
          sq += y.at(n, c, h, w) * y.at(n, c, h, w);
        }
    const double mean = sum / m, var = sq / m - mean * mean;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    // biased variance of the output is var / (var + eps)
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
}

TEST(BatchNorm, AffineAndRunningStatistics) {
  // channel values 1, 3 (batch of 2, 1x1 maps): mean 2, biased var 1, unbiased var 2
  Tensor64 x({2, 1, 1, 1}, std::vector<double>{1, 3});
  auto s = ops::BatchNormState<double>::identity(1);
  s.gamma = {2.0};
  s.beta = {0.5};
  auto y = ops::batchnorm_forward(x, s);
  const double inv = 1.0 / std::sqrt(1.0 + 1e-5);
  EXPECT_NEAR(y[0], 0.5 - 2.0 * inv, 1e-12);
  EXPECT_NEAR(y[1], 0.5 + 2.0 * inv, 1e-12);
  EXPECT_NEAR(s.running_mean[0], 0.9 * 0.0 + 0.1 * 2.0, 1e-12);
  EXPECT_NEAR(s.running_var[0], 0.9 * 1.0 + 0.1 * 2.0, 1e-12);
}

TEST(BatchNorm, EvalModeUsesRunningStatistics) {
  Tensor64 x({1, 1, 1, 2}, std::vector<double>{4, 6});
  auto s = ops::BatchNormState<double>::identity(1);
  s.running_mean = {1.0};
  s.running_var = {4.0};
  s.mode = ops::Mode::eval;
  auto y = ops::batchnorm_forward(x, s);
  EXPECT_NEAR(y[0], 3.0 / std::sqrt(4.0 + 1e-5), 1e-12);
  EXPECT_NEAR(y[1], 5.0 / std::sqrt(4.0 + 1e-5), 1e-12);
  EXPECT_EQ(s.running_mean[0], 1.0);
  EXPECT_EQ(s.running_var[0], 4.0);
}

TEST(BatchNorm, TrainModeNeedsTwoValuesPerChannel) {
  auto s = ops::BatchNormState<float>::identity(1);
  EXPECT_THROW(ops::batchnorm_forward(Tensor({1, 1, 1, 1}, 1.0f), s), DimensionError);
  s.mode = ops::Mode::eval;
  EXPECT_NO_THROW(ops::batchnorm_forward(Tensor({1, 1, 1, 1}, 1.0f), s));
  EXPECT_THROW(ops::batchnorm_forward(Tensor({1, 2, 2, 2}), s), DimensionError);
}

TEST(Activations, ReluAndSigmoidValues) {
  Tensor x({1, 1, 1, 4}, std::vector<float>{-2, 0, 0.5f, 3});
  auto r = ops::relu_forward(x);
  EXPECT_EQ(r[0], 0.0f);
  EXPECT_EQ(r[1], 0.0f);
  EXPECT_EQ(r[2], 0.5f);
  auto g = ops::relu_backward(x, Tensor(x.shape(), 1.0f));
  EXPECT_EQ(g[0], 0.0f);
  EXPECT_EQ(g[1], 0.0f);
  EXPECT_EQ(g[3], 1.0f);

  const float nan = std::numeric_limits<float>::quiet_NaN();
  EXPECT_TRUE(std::isnan(ops::relu_forward(Tensor({1}, nan))[0]));

  EXPECT_DOUBLE_EQ(ops::sigmoid(0.0), 0.5);
  EXPECT_NEAR(ops::sigmoid(2.0), 1.0 / (1.0 + std::exp(-2.0)), 1e-15);
  for (float z : {-1000.0f, -80.0f, 80.0f, 1000.0f}) {
    const float s = ops::sigmoid(z);
    EXPECT_TRUE(std::isfinite(s));
    EXPECT_GE(s, 0.0f);
    EXPECT_LE(s, 1.0f);
  }
}

TEST(Structural, ConcatSplitRoundTrip) {
  Rng rng(51);
  auto a = random_tensor<float>({2, 1, 3, 4}, rng), b = random_tensor<float>({2, 3, 3, 4}, rng);
  auto c = ops::concat_channels(a, b);
  ASSERT_EQ(c.shape(), (Shape{2, 4, 3, 4}));
  EXPECT_EQ(c.at(1, 0, 2, 3), a.at(1, 0, 2, 3));
  EXPECT_EQ(c.at(1, 2, 0, 1), b.at(1, 1, 0, 1));
  auto [sa, sb] = ops::split_channels(c, 1);
  EXPECT_EQ(sa.storage(), a.storage());
  EXPECT_EQ(sb.storage(), b.storage());
  EXPECT_THROW(ops::concat_channels(a, Tensor({2, 1, 3, 5})), DimensionError);
  EXPECT_THROW(ops::split_channels(c, 5), DimensionError);
}

TEST(Structural, CropEvenAndGlobalAverage) {
  Rng rng(52);
  auto x = random_tensor<float>({1, 2, 5, 7}, rng);
  auto c = ops::crop_even_forward(x);
  ASSERT_EQ(c.shape(), (Shape{1, 2, 4, 6}));
  EXPECT_EQ(c.at(0, 1, 3, 5), x.at(0, 1, 3, 5));
  auto g = ops::crop_even_backward(Tensor(c.shape(), 1.0f), x.shape());
  EXPECT_EQ(g.at(0, 0, 4, 0), 0.0f);
  EXPECT_EQ(g.at(0, 0, 0, 6), 0.0f);
  EXPECT_EQ(g.at(0, 0, 3, 5), 1.0f);

  Tensor y({1, 2, 1, 2}, std::vector<float>{1, 3, 10, 20});
  auto avg = ops::global_avg_pool_forward(y);
  EXPECT_FLOAT_EQ(avg[0], 2.0f);
  EXPECT_FLOAT_EQ(avg[1], 15.0f);
  auto ga = ops::global_avg_pool_backward(Tensor(avg.shape(), 1.0f), y.shape());
  for (float v : ga.data()) EXPECT_FLOAT_EQ(v, 0.5f);
}

TEST(Gradcheck, LinearOpIsExact) {
  Rng rng(61);
  auto x = random_tensor<double>({1, 1, 3, 3}, rng);
  ops::ForwardFn<double> f = [](const Tensor64& in) {
    Tensor64 out = in;
    for (auto& v : out.data()) v *= 3;
    return out;
  };
  ops::BackwardFn<double> b = [](const Tensor64&, const Tensor64& g) {
    Tensor64 out = g;
    for (auto& v : out.data()) v *= 3;
    return out;
  };
  EXPECT_LT(ops::gradcheck(f, b, x, 1e-6), 1e-10);
}

TEST(Gradcheck, SigmoidChain) {
  Rng rng(62);
  auto x = random_tensor<float>({1, 2, 3, 3}, rng, -3, 3);
  ops::ForwardFn<float> f = [](const Tensor& in) { return ops::sigmoid_forward(ops::sigmoid_forward(in)); };
  ops::BackwardFn<float> b = [](const Tensor& in, const Tensor& g) {
    auto s1 = ops::sigmoid_forward(in);
    auto s2 = ops::sigmoid_forward(s1);
    return ops::sigmoid_backward(s1, ops::sigmoid_backward(s2, g));
  };
  auto x64 = x.cast<double>();
  const auto a32 = b(x, Tensor(x.shape(), 1.0f));
  std::vector<double> analytic(a32.data().begin(), a32.data().end());
  const double err = testing_util::check_float_against_double(
      [](const Tensor64& in) {
        auto y = ops::sigmoid_forward(ops::sigmoid_forward(in));
        double s = 0;
        for (double v : y.data()) s += v;
        return s;
      },
      x64, analytic, 1e-3);
  EXPECT_LT(err, 1e-4);
}

TEST(Gradcheck, ReportsWrongBackward) {
  Rng rng(63);
  auto x = random_tensor<double>({1, 1, 2, 2}, rng);
  ops::ForwardFn<double> f = [](const Tensor64& in) { return ops::sigmoid_forward(in); };
  ops::BackwardFn<double> wrong = [](const Tensor64&, const Tensor64& g) { return g; };
  EXPECT_GT(ops::gradcheck(f, wrong, x, 1e-6), 0.1);
}

// Every differentiable op over 20 seeds: 32-bit analytic against a central
// difference with eps 1e-3, 64-bit with eps 1e-6.
TEST(Gradcheck, EveryOpOverTwentySeeds) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    for (const auto& c : grad_cases::primitive_cases(seed)) {
      const auto e = grad_cases::run_case(c, seed);
      EXPECT_LT(e.err32, 1e-3) << c.name << " seed " << seed;
      EXPECT_LT(e.err64, kFd64Bound) << c.name << " seed " << seed;
    }
  }
}

// Closed-form batchnorm input gradient as an independent oracle:
// dx = gamma / sigma * (dy - mean(dy) - x_hat * mean(dy * x_hat)).
TEST(Gradcheck, BatchNormInputGradientTightly) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    auto x = random_tensor<double>({2, 2, 4, 4}, rng);
    auto dy = random_tensor<double>(x.shape(), rng);
    auto s = ops::BatchNormState<double>::identity(2);
    s.gamma = {rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5)};
    ops::BatchNormCache<double> cache;
    ops::batchnorm_forward(x, s, &cache);
    auto g = ops::batchnorm_backward(dy, s, cache);
    for (std::size_t c = 0; c < 2; ++c) {
      std::vector<std::size_t> idx;
      for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t i = 0; i < 16; ++i) idx.push_back((n * 2 + c) * 16 + i);
      double mean = 0, var = 0;
      for (auto i : idx) mean += x[i];
      mean /= idx.size();
      for (auto i : idx) var += (x[i] - mean) * (x[i] - mean);
      var /= idx.size();
      const double sigma = std::sqrt(var + 1e-5);
      double mdy = 0, mdyx = 0;
      for (auto i : idx) {
        mdy += dy[i];
        mdyx += dy[i] * (x[i] - mean) / sigma;
      }
      mdy /= idx.size();
      mdyx /= idx.size();
      for (auto i : idx) {
        const double xh = (x[i] - mean) / sigma;
        const double expect = s.gamma[c] / sigma * (dy[i] - mdy - xh * mdyx);
        EXPECT_NEAR(g.input[i], expect, 1e-12) << "seed " << seed;
      }
    }
  }
}

// Toy depth-1, base-2, 8x8 U-Net under the pixel loss.
TEST(Gradcheck, ComposedUNetLossInput64) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto cases = grad_cases::unet_cases(seed);
    ASSERT_EQ(cases.front().name, "unet_loss.input");
    const auto& c = cases.front();
    Rng rng(seed);
    const auto w = grad_cases::uniform({1}, rng, 0.5, 1.5);
    EXPECT_LT(ops::gradcheck<double>(c.forward64, c.backward64, c.input, 1e-6, &w), 1e-4) << "seed " << seed;
  }
}

// Parameter gradients of the toy U-Net: norm-wise agreement with central
// differences in 64-bit, and the 32-bit analytic path against the 64-bit one.
TEST(Gradcheck, ComposedUNetParameters) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (const auto& c : grad_cases::unet_cases(seed)) {
      const Tensor64 one({1}, 1.0);
      const auto a64 = c.backward64(c.input, one);
      const auto a32 = c.backward32(c.input.cast<float>(), one.cast<float>());
      Tensor64 probe = c.input;
      double diff = 0, norm = 0, diff32 = 0;
      for (std::size_t i = 0; i < c.input.size(); ++i) {
        probe[i] = c.input[i] + 1e-6;
        const double lp = c.forward64(probe)[0];
        probe[i] = c.input[i] - 1e-6;
        const double lm = c.forward64(probe)[0];
        probe[i] = c.input[i];
        const double num = (lp - lm) / 2e-6;
        diff += (a64[i] - num) * (a64[i] - num);
        diff32 += (a32[i] - a64[i]) * (a32[i] - a64[i]);
        norm += num * num;
      }
      EXPECT_LT(std::sqrt(diff / norm), 1e-5) << c.name << " seed " << seed;
      EXPECT_LT(std::sqrt(diff32 / norm), 1e-3) << c.name << " seed " << seed;
    }
  }
}
