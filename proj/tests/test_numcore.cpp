#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "adu/core/gradcheck.hpp"
#include "adu/core/ops.hpp"
#include "adu/error.hpp"

using namespace adu;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0,
                     bool requires_grad = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::from_data(std::move(shape), std::move(v), requires_grad);
}

// Projects an arbitrary-shape output onto a scalar with fixed random weights
// so every output element contributes a distinct cotangent.
Tensor project(const Tensor& y, std::uint64_t seed) {
  return sum(y * random_tensor(y.shape(), seed));
}

void expect_grads_match(ModelParams& params, const std::function<Tensor()>& f,
                        double tol = 1e-4) {
  GradCheckOptions opt;
  opt.tolerance = tol;
  opt.seed = 7;
  auto report = grad_check(f, params, opt);
  EXPECT_TRUE(report.passed) << report.failure << " worst=" << report.worst();
}

}  // namespace

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Tensor::from_data({2, 2}, {1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor::zeros({2, 0}), ShapeError);
  EXPECT_THROW(Tensor::from_data({1}, {std::nan("")}), NonFiniteError);
}

TEST(Backward, SquareAndSum) {
  auto x = Tensor::scalar(3.0, true);
  (x * x).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);

  auto a = Tensor::scalar(1.5, true);
  auto b = Tensor::scalar(-2.0, true);
  (a + b).backward();
  EXPECT_DOUBLE_EQ(a.grad()[0], 1.0);
  EXPECT_DOUBLE_EQ(b.grad()[0], 1.0);
}

TEST(Backward, AccumulatesUntilReset) {
  auto x = Tensor::scalar(3.0, true);
  (x * x).backward();
  (x * x).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
  x.zero_grad();
  (x * x).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, NonScalarRootIsContractError) {
  auto x = Tensor::zeros({2}, true);
  EXPECT_THROW((x * 2.0).backward(), ContractError);
}

TEST(Backward, NoGradGuardBuildsNoGraph) {
  auto x = Tensor::scalar(2.0, true);
  Tensor y;
  {
    NoGradGuard guard;
    y = x * x;
  }
  EXPECT_FALSE(y.requires_grad());
  auto z = x.detach() * x;
  z.backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
}

TEST(Backward, NonFiniteResultThrows) {
  auto x = Tensor::scalar(0.0);
  EXPECT_THROW(log(x), NonFiniteError);
  EXPECT_THROW(exp(Tensor::scalar(1000.0)), NonFiniteError);
}

TEST(Conv2d, OnesKernelCountsNeighbours) {
  auto x = Tensor::full({1, 1, 3, 3}, 1.0);
  auto k = Tensor::full({1, 1, 3, 3}, 1.0);
  auto y = conv2d(x, k, 1, 1);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  EXPECT_DOUBLE_EQ(y[4], 9.0);
  EXPECT_DOUBLE_EQ(y[0], 4.0);
  EXPECT_DOUBLE_EQ(y[2], 4.0);
  EXPECT_DOUBLE_EQ(y[6], 4.0);
  EXPECT_DOUBLE_EQ(y[8], 4.0);
  EXPECT_DOUBLE_EQ(y[1], 6.0);
}

TEST(Conv2d, ZeroAndDeltaKernels) {
  auto x = random_tensor({2, 3, 5, 4}, 1);
  auto zero = conv2d(x, Tensor::zeros({2, 3, 3, 3}), 1, 1);
  for (double v : zero.data()) EXPECT_EQ(v, 0.0);

  std::vector<double> delta(9, 0.0);
  delta[4] = 1.0;
  auto single = random_tensor({1, 1, 5, 4}, 2);
  auto y = conv2d(single, Tensor::from_data({1, 1, 3, 3}, delta), 1, 1);
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_EQ(y[i], single[i]);
}

TEST(Conv2d, OutputExtentAndErrors) {
  auto x = random_tensor({1, 2, 7, 6}, 3);
  auto y = conv2d(x, random_tensor({4, 2, 3, 3}, 4), 2, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 4, 4, 3}));
  EXPECT_THROW(conv2d(x, random_tensor({4, 3, 3, 3}, 4), 1, 1), ShapeError);
  EXPECT_THROW(conv2d(x, random_tensor({4, 2, 2, 2}, 4), 1, 1), ShapeError);
}

TEST(Conv2d, Linearity) {
  auto x = random_tensor({2, 3, 6, 5}, 10);
  auto y = random_tensor({2, 3, 6, 5}, 11);
  auto k = random_tensor({4, 3, 3, 3}, 12);
  const double a = 0.7, b = -1.3;
  auto lhs = conv2d(x * a + y * b, k, 2, 1);
  auto rhs = conv2d(x, k, 2, 1) * a + conv2d(y, k, 2, 1) * b;
  for (std::size_t i = 0; i < lhs.numel(); ++i) EXPECT_NEAR(lhs[i], rhs[i], 1e-10);
}

TEST(Softmax, ClosedForms) {
  auto y = softmax_lastdim(Tensor::from_data({2}, {0.0, 0.0}));
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(y[1], 0.5);
  auto z = softmax_lastdim(Tensor::from_data({2}, {std::log(2.0), 0.0}));
  EXPECT_NEAR(z[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(z[1], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto x = random_tensor({5, 7}, seed, -30.0, 30.0);
    auto y = softmax_lastdim(x);
    auto ys = softmax_lastdim(x + 123.5);
    for (std::size_t r = 0; r < 5; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        const double v = y[r * 7 + j];
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        EXPECT_NEAR(v, ys[r * 7 + j], 1e-12);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Resample, PoolUpsampleBilinear) {
  auto block = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(pool_avg2(block)[0], 2.5);

  auto x = random_tensor({2, 3, 4, 5}, 5);
  auto back = pool_avg2(upsample_nearest2(x));
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(back[i], x[i]);

  auto c = Tensor::full({1, 2, 3, 5}, 4.25);
  for (auto [h, w] : {std::pair{7, 9}, {2, 2}, {1, 13}}) {
    auto r = bilinear_resize(c, h, w);
    for (double v : r.data()) EXPECT_NEAR(v, 4.25, 1e-14);
  }

  EXPECT_THROW(pool_avg2(Tensor::zeros({1, 1, 3, 4})), ShapeError);
}

TEST(Resample, BilinearHalfPixelConvention) {
  // 1D ramp [0, 1] upsampled to 4: sources at -0.25, 0.25, 0.75, 1.25.
  auto x = Tensor::from_data({1, 1, 1, 2}, {0.0, 1.0});
  auto y = bilinear_resize(x, 1, 4);
  EXPECT_DOUBLE_EQ(y[0], 0.0);
  EXPECT_DOUBLE_EQ(y[1], 0.25);
  EXPECT_DOUBLE_EQ(y[2], 0.75);
  EXPECT_DOUBLE_EQ(y[3], 1.0);
}

TEST(GradCheck, QuadraticPassesTightly) {
  ModelParams p;
  auto& w = p.add("w", random_tensor({3, 4}, 20, -1, 1, true));
  GradCheckOptions opt;
  opt.tolerance = 1e-8;
  auto report = grad_check([&] { return sum(square(w)) * 0.5 + sum(w); }, p, opt);
  EXPECT_TRUE(report.passed) << report.worst();
  EXPECT_LT(report.worst(), 1e-8);
}

TEST(GradCheck, DetectsDoubledGradient) {
  ModelParams p;
  auto& w = p.add("w", random_tensor({6}, 21, 0.5, 2.0, true));
  // Value of f, gradient of 2f.
  auto corrupted = [&] {
    auto f = sum(square(w) * w);
    return f * 2.0 - f.detach();
  };
  auto report = grad_check(corrupted, p, 1e-5);
  EXPECT_FALSE(report.passed);
  EXPECT_NEAR(report.worst(), 0.5, 1e-3);
}

TEST(GradCheck, NonFiniteLossNamesParameter) {
  ModelParams p;
  auto& w = p.add("weights", Tensor::from_data({1}, {1e-6}, true));
  auto report = grad_check([&] { return sum(log(w)); }, p, 1e-5);
  EXPECT_FALSE(report.passed);
  EXPECT_NE(report.failure.find("weights"), std::string::npos);
}

TEST(GradCheck, EveryOpMatchesFiniteDifferences) {
  ModelParams p;
  auto& a = p.add("a", random_tensor({2, 3, 4, 6}, 30, -1, 1, true));
  auto& b = p.add("b", random_tensor({2, 3, 4, 6}, 31, 0.5, 1.5, true));
  auto& k = p.add("k", random_tensor({4, 3, 3, 3}, 32, -0.5, 0.5, true));
  auto& bias = p.add("bias", random_tensor({4}, 33, -0.5, 0.5, true));
  auto& m = p.add("m", random_tensor({5, 3}, 34, -1, 1, true));
  auto& n = p.add("n", random_tensor({3, 4}, 35, -1, 1, true));
  auto& s = p.add("s", random_tensor({2, 1, 4, 6}, 36, -1, 1, true));

  struct Case {
    const char* name;
    std::function<Tensor()> f;
  };
  std::vector<Case> cases{
      {"add_sub_mul_div", [&] { return project((a + b) * a - a / b, 1); }},
      {"exp_log_sqrt", [&] { return project(exp(a) + log(b) + sqrt(b), 2); }},
      {"abs_square_pow", [&] { return project(abs(a) + square(a) + pow_scalar(b, 2.5), 3); }},
      {"sigmoid_relu_clamp",
       [&] { return project(sigmoid(a) + relu(a) + clamp(a, -0.5, 0.5), 4); }},
      {"mean", [&] { return mean(a * b); }},
      {"conv2d_s1", [&] { return project(conv2d(a, k, bias, 1, 1), 5); }},
      {"conv2d_s2", [&] { return project(conv2d(a, k, 2, 1), 6); }},
      {"pool_upsample", [&] { return project(upsample_nearest2(pool_avg2(a)), 7); }},
      {"bilinear", [&] { return project(bilinear_resize(a, 7, 5), 8); }},
      {"concat_slice", [&] { return project(slice_batch(concat_channels(a, b), 1), 9); }},
      {"concat_batch", [&] { return project(concat_batch({a, b}), 10); }},
      {"broadcast", [&] { return project(broadcast_channels(s, 3) * a, 11); }},
      {"matmul_transpose", [&] { return project(transpose2d(matmul(m, n)), 12); }},
      {"softmax", [&] { return project(softmax_lastdim(matmul(m, n)), 13); }},
      {"reshape", [&] { return project(reshape(a, {6, 24}), 14); }},
      {"gather", [&] { return project(gather_flat(a, {3, 0, 3, 47, 100}), 15); }},
  };
  for (auto& c : cases) {
    SCOPED_TRACE(c.name);
    expect_grads_match(p, c.f);
  }
}

TEST(Determinism, RepeatedForwardIsBitIdentical) {
  auto x = random_tensor({2, 3, 8, 8}, 40);
  auto k = random_tensor({5, 3, 3, 3}, 41);
  auto y1 = softmax_lastdim(bilinear_resize(conv2d(x, k, 2, 1), 6, 6));
  auto y2 = softmax_lastdim(bilinear_resize(conv2d(x, k, 2, 1), 6, 6));
  for (std::size_t i = 0; i < y1.numel(); ++i) EXPECT_EQ(y1[i], y2[i]);
}
