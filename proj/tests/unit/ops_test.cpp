#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dmrn/ops.hpp"
#include "support/gradcheck.hpp"

namespace dmrn {
namespace {

using testing::check_gradients;
using testing::Leaves;
using testing::random_tensor;
using testing::weighted_sum;

constexpr double kPerOpTolerance = 1e-4;

// Seven nested loops straight from the definition of cross-correlation with
// zero padding.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, std::size_t stride,
                          std::size_t pad) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t K = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t Ho = (H + 2 * pad - kh) / stride + 1, Wo = (W + 2 * pad - kw) / stride + 1;
  Tensor<double> y(Shape{N, K, Ho, Wo});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t oy = 0; oy < Ho; ++oy)
        for (std::size_t ox = 0; ox < Wo; ++ox) {
          double acc = 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < kh; ++i)
              for (std::size_t j = 0; j < kw; ++j) {
                const long iy = static_cast<long>(oy * stride + i) - static_cast<long>(pad);
                const long ix = static_cast<long>(ox * stride + j) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W))
                  continue;
                acc += x.at(n, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) *
                       w.at(k, c, i, j);
              }
          y.at(n, k, oy, ox) = acc;
        }
  return y;
}

struct ConvCase {
  Shape x, w;
  std::size_t stride, pad;
};

class ConvOracle : public ::testing::TestWithParam<ConvCase> {};

TEST_P(ConvOracle, GemmPathMatchesNaiveLoops) {
  const auto& p = GetParam();
  std::mt19937_64 rx(7), rw(8);
  Tensor<double> x = random_tensor(p.x, rx), w = random_tensor(p.w, rw);
  const Tensor<double> expected = naive_conv(x, w, p.stride, p.pad);

  Tape<double> tape;
  auto y = conv2d(tape.constant(x), tape.constant(w), {p.stride, p.pad});
  ASSERT_EQ(y.shape(), expected.shape());
  for (std::size_t i = 0; i < expected.numel(); ++i) {
    EXPECT_NEAR(y.value()[i], expected[i], 1e-12) << "element " << i;
  }
  const Tensor<double> direct = conv2d_direct(x, w, {p.stride, p.pad});
  for (std::size_t i = 0; i < expected.numel(); ++i) EXPECT_NEAR(direct[i], expected[i], 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Shapes, ConvOracle,
                         ::testing::Values(ConvCase{{2, 3, 8, 8}, {4, 3, 3, 3}, 1, 1},
                                           ConvCase{{1, 2, 9, 7}, {3, 2, 3, 3}, 2, 1},
                                           ConvCase{{3, 4, 6, 6}, {5, 4, 1, 1}, 2, 0},
                                           ConvCase{{1, 1, 5, 5}, {2, 1, 3, 3}, 1, 0}));

TEST(Conv, FloatPathAgreesWithDouble) {
  std::mt19937_64 rng(7);
  Tensor<double> x = random_tensor({2, 3, 10, 10}, rng), w = random_tensor({4, 3, 3, 3}, rng);
  Tape<float> tape;
  auto y = conv2d(tape.constant(x.cast<float>()), tape.constant(w.cast<float>()), {2, 1});
  const Tensor<double> expected = naive_conv(x, w, 2, 1);
  for (std::size_t i = 0; i < expected.numel(); ++i) {
    EXPECT_NEAR(y.value()[i], expected[i], 1e-4);
  }
}

TEST(Conv, OutputSize) {
  EXPECT_EQ(conv_output_size(64, 3, 1, 1), 64u);
  EXPECT_EQ(conv_output_size(64, 3, 2, 1), 32u);
  EXPECT_EQ(conv_output_size(7, 1, 2, 0), 4u);
}

TEST(Conv, ChannelMismatchThrows) {
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>(Shape{1, 3, 4, 4}));
  auto w = tape.constant(Tensor<double>(Shape{2, 2, 3, 3}));
  EXPECT_THROW(conv2d(x, w), ShapeError);
}

TEST(FullyConnected, MatchesMatmulOracle) {
  std::mt19937_64 rng(11);
  Tensor<double> x = random_tensor({4, 6}, rng), w = random_tensor({3, 6}, rng),
                 b = random_tensor({3}, rng);
  Tape<double> tape;
  auto y = fully_connected(tape.constant(x), tape.constant(w), tape.constant(b));
  ASSERT_EQ(y.shape(), (Shape{4, 3}));
  for (std::size_t n = 0; n < 4; ++n)
    for (std::size_t o = 0; o < 3; ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < 6; ++i) acc += x[n * 6 + i] * w[o * 6 + i];
      EXPECT_NEAR(y.value()[n * 3 + o], acc, 1e-12);
    }
}

TEST(Relu, PropagatesNaN) {
  Tensor<double> x(Shape{3}, std::vector<double>{-1.0, std::nan(""), 2.0});
  Tape<double> tape;
  auto y = relu(tape.constant(x));
  EXPECT_EQ(y.value()[0], 0.0);
  EXPECT_TRUE(std::isnan(y.value()[1]));
  EXPECT_EQ(y.value()[2], 2.0);
}

TEST(Pool, AveragesEachPlane) {
  Tensor<double> x(Shape{1, 2, 2, 2}, std::vector<double>{1, 2, 3, 4, -1, -1, 5, 5});
  Tape<double> tape;
  auto y = adaptive_avg_pool(tape.constant(x));
  EXPECT_EQ(y.shape(), (Shape{1, 2, 1, 1}));
  EXPECT_DOUBLE_EQ(y.value()[0], 2.5);
  EXPECT_DOUBLE_EQ(y.value()[1], 2.0);
}

TEST(Distance, RowwiseAndRankOne) {
  Tensor<double> a(Shape{2, 2}, std::vector<double>{0, 0, 1, 1});
  Tensor<double> b(Shape{2, 2}, std::vector<double>{3, 4, 1, 1});
  Tape<double> tape;
  auto d = l2_distance(tape.constant(a), tape.constant(b));
  EXPECT_EQ(d.shape(), (Shape{2}));
  EXPECT_DOUBLE_EQ(d.value()[0], 5.0);
  EXPECT_DOUBLE_EQ(d.value()[1], 0.0);

  Tensor<double> u(Shape{3}, std::vector<double>{1, 2, 2});
  auto s = l2_distance(tape.constant(u), tape.constant(Tensor<double>(Shape{3})));
  EXPECT_TRUE(s.shape().empty());
  EXPECT_DOUBLE_EQ(s.value().item(), 3.0);
}

TEST(Distance, ZeroDistanceHasZeroSubgradient) {
  Tensor<double> a(Shape{1, 3}, 0.5);
  Tape<double> tape;
  auto pa = tape.parameter(a);
  auto d = l2_distance(pa, tape.constant(Tensor<double>(Shape{1, 3}, 0.5)));
  tape.backward(sum(d));
  for (double g : a.grad()) EXPECT_EQ(g, 0.0);
}

TEST(BatchNorm, TrainingUpdatesRunningStatistics) {
  Tensor<double> x(Shape{2, 1, 1, 2}, std::vector<double>{1, 2, 3, 6});
  Tensor<double> gamma(Shape{1}, 1.0), beta(Shape{1}, 0.0);
  BatchNormState<double> st{Tensor<double>(Shape{1}, 0.0), Tensor<double>(Shape{1}, 1.0)};
  Tape<double> tape;
  auto y = batch_norm(tape.constant(x), tape.constant(gamma), tape.constant(beta), st, {});
  // mean 3, biased var 3.5, unbiased var 14/3
  EXPECT_NEAR(st.running_mean[0], 0.3, 1e-12);
  EXPECT_NEAR(st.running_var[0], 0.9 + 0.1 * 14.0 / 3.0, 1e-12);
  EXPECT_NEAR(y.value()[0], (1 - 3) / std::sqrt(3.5 + 1e-5), 1e-12);

  Tape<double> eval;
  BatchNormOptions inference;
  inference.training = false;
  auto z = batch_norm(eval.constant(x), eval.constant(gamma), eval.constant(beta), st, inference);
  EXPECT_NEAR(z.value()[0], (1 - 0.3) / std::sqrt(st.running_var[0] + 1e-5), 1e-12);
}

TEST(GradCheckHarness, FlagsAWrongBackward) {
  // y = x² recorded with a backward that claims dy/dx = x.
  auto wrong_square = [](Var<double> x) {
    Tensor<double> y = x.value();
    for (auto& v : y.data()) v = v * v;
    return x.tape->record(std::move(y), {x.id}, [x](Tape<double>& t, std::size_t self) {
      auto g = t.grad(self);
      auto gx = t.grad(x.id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * x.value()[i];
    });
  };
  std::mt19937_64 rng(12);
  auto x = random_tensor({4}, rng);
  auto r = check_gradients({&x}, [&](Tape<double>& t, const Leaves& v) {
    return weighted_sum(t, wrong_square(v[0]));
  });
  EXPECT_GT(r.max_rel_error, 0.1);
  auto kink_aware = check_gradients(
      {&x}, [&](Tape<double>& t, const Leaves& v) { return weighted_sum(t, wrong_square(v[0])); },
      testing::GradCheckOptions{1e-5, 1e-6, true});
  EXPECT_GT(kink_aware.max_rel_error, 0.1);
  EXPECT_EQ(kink_aware.kinks, 0u);
}

TEST(GradCheckHarness, KinkAwareModeShrinksTheStep) {
  // relu at 3e-6 is smooth for steps below 3e-6 only.
  Tensor<double> x(Shape{2}, std::vector<double>{3e-6, 0.5});
  auto plain = check_gradients({&x}, [](Tape<double>& t, const Leaves& v) {
    return weighted_sum(t, relu(v[0]));
  });
  EXPECT_GT(plain.max_rel_error, 0.1);
  auto aware = check_gradients(
      {&x}, [](Tape<double>& t, const Leaves& v) { return weighted_sum(t, relu(v[0])); },
      testing::GradCheckOptions{1e-5, 1e-6, true});
  EXPECT_LT(aware.max_rel_error, 1e-6);
  EXPECT_EQ(aware.kinks, 0u);
}

// Finite-difference checks, one per differentiable operation.

TEST(GradCheck, Conv2dStrideOne) {
  std::mt19937_64 rng(1);
  auto x = random_tensor({2, 2, 5, 5}, rng), w = random_tensor({3, 2, 3, 3}, rng);
  auto r = check_gradients({&x, &w}, [](Tape<double>& t, const Leaves& v) {
    return weighted_sum(t, conv2d(v[0], v[1], {1, 1}));
  });
  EXPECT_LT(r.max_rel_error, kPerOpTolerance);
}

TEST(GradCheck, Conv2dStrideTwo) {
  std::mt19937_64 rng(2);
  auto x = random_tensor({1, 3, 6, 7}, rng), w = random_tensor({2, 3, 3, 3}, rng);
  auto r = check_gradients({&x, &w}, [](Tape<double>& t, const Leaves& v) {
    return weighted_sum(t, conv2d(v[0], v[1], {2, 1}));
  });
  EXPECT_LT(r.max_rel_error, kPerOpTolerance);
}

TEST(GradCheck, Conv2dPointwise) {
  std::mt19937_64 rng(3);
  auto x = random_tensor({2, 3, 4, 4}, rng), w = random_tensor({2, 3, 1, 1}, rng);
  auto r = check_gradients({&x, &w}, [](Tape<double>& t, const Leaves& v) {
    return weighted_sum(t, conv2d(v[0], v[1], {2, 0}));
  });
  EXPECT_LT(r.max_rel_error, kPerOpTolerance);
}

TEST(GradCheck, Relu) {
  std::mt19937_64 rng(4);
  auto x = random_tensor({3, 7}, rng);
  auto r = check_gradients({&x}, [](Tape<double>& t, const Leaves& v) {
    return weighted_sum(t, relu(v[0]));
  });
  EXPECT_LT(r.max_rel_error, kPerOpTolerance);
}

TEST(GradCheck, AddMulScale) {
  std::mt19937_64 rng(5);
  auto a = random_tensor({2, 3}, rng), b = random_tensor({2, 3}, rng);
  auto r = check_gradients({&a, &b}, [](Tape<double>& t, const Leaves& v) {
    return weighted_sum(t, scale(add(mul(v[0], v[1]), v[0]), 0.7));
  });
  EXPECT_LT(r.max_rel_error, kPerOpTolerance);
}

TEST(GradCheck, ReshapeAndSum) {
  std::mt19937_64 rng(6);
  auto a = random_tensor({2, 6}, rng);
  auto r = check_gradients({&a}, [](Tape<double>& t, const Leaves& v) {
    auto y = reshape(v[0], {3, 4});
    return add(weighted_sum(t, y), sum(mul(y, y)));
  });
  EXPECT_LT(r.max_rel_error, kPerOpTolerance);
}

TEST(GradCheck, BatchNormTraining) {
  std::mt19937_64 rng(7);
  auto x = random_tensor({3, 2, 3, 3}, rng), g = random_tensor({2}, rng),
       b = random_tensor({2}, rng);
  BatchNormState<double> st{Tensor<double>(Shape{2}, 0.0), Tensor<double>(Shape{2}, 1.0)};
  auto r = check_gradients({&x, &g, &b}, [&](Tape<double>& t, const Leaves& v) {
    return weighted_sum(t, batch_norm(v[0], v[1], v[2], st, {}));
  });
  EXPECT_LT(r.max_rel_error, kPerOpTolerance);
}

TEST(GradCheck, BatchNormInference) {
  std::mt19937_64 rng(8);
  auto x = random_tensor({2, 2, 2, 2}, rng), g = random_tensor({2}, rng),
       b = random_tensor({2}, rng);
  BatchNormState<double> st{Tensor<double>(Shape{2}, std::vector<double>{0.1, -0.2}),
                            Tensor<double>(Shape{2}, std::vector<double>{0.5, 2.0})};
  BatchNormOptions opts;
  opts.training = false;
  auto r = check_gradients({&x, &g, &b}, [&](Tape<double>& t, const Leaves& v) {
    return weighted_sum(t, batch_norm(v[0], v[1], v[2], st, opts));
  });
  EXPECT_LT(r.max_rel_error, kPerOpTolerance);
}

TEST(GradCheck, AdaptiveAvgPool) {
  std::mt19937_64 rng(9);
  auto x = random_tensor({2, 3, 4, 5}, rng);
  auto r = check_gradients({&x}, [](Tape<double>& t, const Leaves& v) {
    return weighted_sum(t, adaptive_avg_pool(v[0]));
  });
  EXPECT_LT(r.max_rel_error, kPerOpTolerance);
}

TEST(GradCheck, FullyConnected) {
  std::mt19937_64 rng(10);
  auto x = random_tensor({3, 5}, rng), w = random_tensor({4, 5}, rng), b = random_tensor({4}, rng);
  auto r = check_gradients({&x, &w, &b}, [](Tape<double>& t, const Leaves& v) {
    return weighted_sum(t, fully_connected(v[0], v[1], v[2]));
  });
  EXPECT_LT(r.max_rel_error, kPerOpTolerance);
}

TEST(GradCheck, L2Distance) {
  std::mt19937_64 rng(11);
  auto a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
  auto r = check_gradients({&a, &b}, [](Tape<double>& t, const Leaves& v) {
    return weighted_sum(t, l2_distance(v[0], v[1]));
  });
  EXPECT_LT(r.max_rel_error, kPerOpTolerance);
}

}  // namespace
}  // namespace dmrn
