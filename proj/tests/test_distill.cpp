#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "adu/core/gradcheck.hpp"
#include "adu/core/ops.hpp"
#include "adu/distill/gradsuite.hpp"
#include "adu/distill/losses.hpp"
#include "adu/error.hpp"
#include "test_util.hpp"

using namespace adu;
using namespace adu::distill;
using testutil::random_tensor;

namespace {

Tensor vec(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor::from_data({1, 1, 1, n}, std::move(v));
}

GradReport check(ModelParams& p, const std::function<Tensor()>& f) {
  GradCheckOptions opt;
  opt.seed = 3;
  return grad_check(f, p, opt);
}

// Grid minimizer of f over [-6, 6] with 10^4 + 1 points.
double grid_argmin(const std::function<double(double)>& f) {
  double best = -6.0, best_v = f(-6.0);
  for (int i = 1; i <= 10000; ++i) {
    const double s = -6.0 + 12.0 * i / 10000.0;
    const double v = f(s);
    if (v < best_v) {
      best_v = v;
      best = s;
    }
  }
  return best;
}

nets::FeaturePyramid random_pyramid(std::size_t n, std::size_t h, std::size_t w,
                                    std::uint64_t seed, bool requires_grad = false) {
  nets::FeaturePyramid p;
  for (std::size_t l = 0; l < nets::kNumLevels; ++l) {
    const std::size_t f = std::size_t{4} << l;
    p.levels[l] = random_tensor({n, nets::kLevelChannels[l], h / f, w / f}, seed + l, 0.0, 2.0,
                                requires_grad);
  }
  return p;
}

}  // namespace

// ---- attention ----------------------------------------------------------

TEST(Attention, SingleTokenAppliesValueProjection) {
  auto f = random_tensor({1, 4, 1, 1}, 1);
  auto wq = random_tensor({4, 4}, 2), wk = random_tensor({4, 4}, 3), wv = random_tensor({4, 4}, 4);
  auto out = attention_adapt(f, wq, wk, wv);
  for (std::size_t j = 0; j < 4; ++j) {
    double expect = 0.0;
    for (std::size_t c = 0; c < 4; ++c) expect += f[c] * wv[c * 4 + j];
    EXPECT_NEAR(out[j], expect, 1e-12);
  }
}

TEST(Attention, ZeroQueryGivesMeanOfValues) {
  auto f = random_tensor({1, 3, 2, 3}, 5);
  auto wv = random_tensor({3, 3}, 6);
  auto out = attention_adapt(f, Tensor::zeros({3, 3}), random_tensor({3, 3}, 7), wv);
  auto lin = linear_adapt(f, wv);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0.0;
    for (std::size_t t = 0; t < 6; ++t) m += lin[c * 6 + t];
    m /= 6.0;
    for (std::size_t t = 0; t < 6; ++t) EXPECT_NEAR(out[c * 6 + t], m, 1e-12);
  }
}

TEST(Attention, MatchesBruteForceLoop) {
  const std::size_t c = 3, t = 4;
  auto f = random_tensor({2, c, 2, 2}, 8);
  auto wq = random_tensor({c, c}, 9), wk = random_tensor({c, c}, 10), wv = random_tensor({c, c}, 11);
  auto out = attention_adapt(f, wq, wk, wv);
  ASSERT_EQ(out.shape(), f.shape());
  for (std::size_t n = 0; n < 2; ++n) {
    auto tok = [&](std::size_t i, std::size_t ch) { return f[n * c * t + ch * t + i]; };
    auto proj = [&](const Tensor& w, std::size_t i, std::size_t j) {
      double s = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) s += tok(i, ch) * w[ch * c + j];
      return s;
    };
    for (std::size_t i = 0; i < t; ++i) {
      std::vector<double> logits(t);
      double mx = -1e300;
      for (std::size_t k = 0; k < t; ++k) {
        double d = 0.0;
        for (std::size_t j = 0; j < c; ++j) d += proj(wq, i, j) * proj(wk, k, j);
        logits[k] = d / std::sqrt(3.0);
        mx = std::max(mx, logits[k]);
      }
      double z = 0.0;
      for (auto& l : logits) z += (l = std::exp(l - mx));
      for (std::size_t j = 0; j < c; ++j) {
        double v = 0.0;
        for (std::size_t k = 0; k < t; ++k) v += logits[k] / z * proj(wv, k, j);
        EXPECT_NEAR(out[n * c * t + j * t + i], v, 1e-12);
      }
    }
  }
}

TEST(Attention, RejectsMismatchedProjection) {
  auto f = random_tensor({1, 4, 2, 2}, 1);
  EXPECT_THROW(attention_adapt(f, Tensor::zeros({3, 3}), Tensor::zeros({4, 4}), Tensor::zeros({4, 4})),
               ShapeError);
  EXPECT_THROW(linear_adapt(f, Tensor::zeros({4, 3})), ShapeError);
}

TEST(Attention, GradCheck) {
  ModelParams p(Role::adapter);
  auto& f = p.add("f", random_tensor({1, 3, 2, 2}, 1, -1.0, 1.0, true));
  auto& wq = p.add("wq", random_tensor({3, 3}, 2, -1.0, 1.0, true));
  auto& wk = p.add("wk", random_tensor({3, 3}, 3, -1.0, 1.0, true));
  auto& wv = p.add("wv", random_tensor({3, 3}, 4, -1.0, 1.0, true));
  auto proj = random_tensor({1, 3, 2, 2}, 5);
  auto r = check(p, [&] { return sum(attention_adapt(f, wq, wk, wv) * proj); });
  EXPECT_TRUE(r.passed) << r.failure;
}

TEST(Attention, AdapterLayout) {
  auto a = init_adapter(0);
  EXPECT_EQ(a.size(), 24u);
  EXPECT_EQ(a.at("adapt.dec3.wq").shape(), (Shape{128, 128}));
  auto wv = a.at("adapt.enc0.wv");
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(wv[i * 16 + j], i == j ? 1.0 : 0.0);
  EXPECT_EQ(checksum(init_adapter(5)), checksum(init_adapter(5)));
}

// ---- feature distillation -----------------------------------------------

TEST(FeatureDistill, Examples) {
  auto f = random_tensor({1, 2, 3, 3}, 1);
  EXPECT_EQ(feature_distill(f, f).item(), 0.0);
  EXPECT_DOUBLE_EQ(feature_distill(Tensor::full({1, 2, 3, 3}, 1.0), Tensor::zeros({1, 2, 3, 3})).item(),
                   1.0);
  auto g = random_tensor({1, 2, 3, 3}, 2);
  const double base = feature_distill(f, g).item();
  EXPECT_NEAR(feature_distill(f * 3.0, g * 3.0).item(), 9.0 * base, 1e-12);
  EXPECT_THROW(feature_distill(f, Tensor::zeros({1, 2, 3, 2})), ShapeError);
}

TEST(FeatureDistill, PyramidAveragesLevels) {
  auto t = random_pyramid(1, 32, 32, 1);
  auto s = random_pyramid(1, 32, 32, 10);
  double expect = 0.0;
  for (std::size_t l = 0; l < 4; ++l) expect += feature_distill(t.levels[l], s.levels[l]).item();
  EXPECT_NEAR(feature_distill(t, s).item(), expect / 4.0, 1e-14);
}

TEST(FeatureDistill, NoGradientToTeacher) {
  auto t = random_tensor({1, 2, 2, 2}, 1, -1.0, 1.0, true);
  auto s = random_tensor({1, 2, 2, 2}, 2, -1.0, 1.0, true);
  feature_distill(t, s).backward();
  EXPECT_FALSE(t.has_grad());
  EXPECT_TRUE(s.has_grad());
}

// ---- depth distillation score and focal loss ----------------------------

TEST(Score, Examples) {
  auto dt = random_tensor({1, 1, 4, 4}, 1, 1.0, 80.0);
  EXPECT_EQ(depth_distill_score(dt, dt).item(), 1.0);
  EXPECT_NEAR(depth_distill_score(dt, dt * 1.1).item(), 0.9, 1e-12);
  EXPECT_DOUBLE_EQ(depth_distill_score(vec({2, 4}), vec({1, 5})).item(), 0.625);
  // Relative error above 100% clamps to the floor.
  EXPECT_EQ(depth_distill_score(vec({1, 1}), vec({5, 5})).item(), kScoreFloor);
}

TEST(Score, MaskSelectsPixels) {
  auto mask = vec({1, 0, 1});
  EXPECT_DOUBLE_EQ(depth_distill_score(vec({2, 9, 4}), vec({1, 100, 5}), mask).item(), 0.625);
  EXPECT_THROW(depth_distill_score(vec({2, 4}), vec({1, 5}), vec({0, 0})), ContractError);
  EXPECT_THROW(depth_distill_score(vec({0.0, 4}), vec({1, 5})), ContractError);
}

TEST(Focal, Examples) {
  EXPECT_EQ(focal_depth_loss(Tensor::scalar(1.0), 1.0, 2.0).item(), 0.0);
  EXPECT_NEAR(focal_depth_loss(Tensor::scalar(std::exp(-1.0)), 1.0, 0.0).item(), 1.0, 1e-15);
  EXPECT_NEAR(focal_depth_loss(Tensor::scalar(0.5), 1.0, 2.0).item(), 0.25 * std::log(2.0), 1e-15);
  EXPECT_NEAR(focal_depth_loss(Tensor::scalar(0.5), 1.0, 2.0).item(), 0.173287, 1e-6);
}

TEST(Focal, MonotoneDecreasingOnGrid) {
  for (double gamma : {0.0, 0.5, 1.0, 2.0}) {
    double prev = focal_depth_loss(Tensor::scalar(kScoreFloor), 1.0, gamma).item();
    for (int i = 1; i <= 1000; ++i) {
      const double p = kScoreFloor + (1.0 - kScoreFloor) * i / 1000.0;
      const double v = focal_depth_loss(Tensor::scalar(p), 1.0, gamma).item();
      ASSERT_LT(v, prev) << "gamma=" << gamma << " p=" << p;
      prev = v;
    }
  }
}

TEST(Focal, GradCheckThroughScore) {
  ModelParams p(Role::student);
  auto& ds = p.add("ds", random_tensor({1, 1, 3, 3}, 2, 5.0, 15.0, true));
  auto dt = random_tensor({1, 1, 3, 3}, 1, 5.0, 15.0);
  auto r = check(p, [&] { return focal_depth_loss(depth_distill_score(dt, ds), 1.0, 2.0); });
  EXPECT_TRUE(r.passed) << r.failure;
}

// ---- response distillation ----------------------------------------------

TEST(Response, Examples) {
  auto d = random_tensor({1, 1, 3, 3}, 1, 1.0, 10.0);
  EXPECT_EQ(response_distill_l1(d, d).item(), 0.0);
  EXPECT_NEAR(response_distill_l1(d, d + 0.5).item(), 9 * 0.5, 1e-12);
  auto e = random_tensor({1, 1, 3, 3}, 2, 1.0, 10.0);
  double brute = 0.0;
  for (std::size_t i = 0; i < 9; ++i) brute += std::abs(d[i] - e[i]);
  EXPECT_NEAR(response_distill_l1(d, e).item(), brute, 1e-12);
  EXPECT_NEAR(response_distill_l1_mean(d, e).item(), brute / 9.0, 1e-12);
  EXPECT_THROW(response_distill_l1(d, vec({1, 2})), ShapeError);
}

// ---- uncertainty-weighted losses ----------------------------------------

TEST(Umf, Examples) {
  auto f = random_tensor({1, 4, 2, 2}, 1);
  auto s0 = Tensor::zeros({1, 1, 2, 2});
  EXPECT_EQ(umf_level(f, f, s0).item(), 0.0);
  EXPECT_DOUBLE_EQ(umf_level(vec({1.0}), vec({0.0}), vec({0.0})).item(), 0.5);
  EXPECT_THROW(umf_level(f, f, Tensor::zeros({1, 1, 4, 4})), ShapeError);
}

TEST(Umf, ZeroLogVarIsHalfFeatureDistill) {
  auto te = random_pyramid(1, 32, 64, 1), se = random_pyramid(1, 32, 64, 20);
  auto td = random_pyramid(1, 32, 64, 40), sd = random_pyramid(1, 32, 64, 60);
  auto logvar = nets::rearrange_logvar(Tensor::zeros({1, 1, 32, 64}));
  const double expect =
      0.5 * (feature_distill(te, se).item() + feature_distill(td, sd).item()) / 2.0;
  EXPECT_NEAR(umf_loss(te, se, td, sd, logvar).item(), expect, 1e-14);
}

TEST(Umf, ArgminIsLogSquaredResidual) {
  for (double r : {0.1, 1.0, 3.0}) {
    auto f = [&](double s) {
      return umf_level(vec({r}), vec({0.0}), vec({s})).item();
    };
    EXPECT_NEAR(grid_argmin(f), std::log(r * r), 2e-3) << "r=" << r;
  }
}

TEST(Umr, Examples) {
  auto d = random_tensor({1, 1, 3, 3}, 1, 1.0, 10.0);
  EXPECT_EQ(umr_loss(d, d, Tensor::zeros({1, 1, 3, 3})).item(), 0.0);
  EXPECT_NEAR(umr_loss(vec({2.0}), vec({3.0}), vec({0.0})).item(), std::numbers::sqrt2, 1e-15);
  auto e = random_tensor({1, 1, 3, 3}, 2, 1.0, 10.0);
  auto mask = Tensor::from_data({1, 1, 3, 3}, {1, 0, 1, 1, 1, 0, 1, 1, 1});
  EXPECT_NEAR(umr_loss(d, e, Tensor::zeros({1, 1, 3, 3}), mask).item(),
              std::numbers::sqrt2 * response_distill_l1_mean(d, e, mask).item(), 1e-13);
  EXPECT_THROW(umr_loss(d, e, Tensor::zeros({1, 1, 3, 3}), Tensor::zeros({1, 1, 3, 3})),
               ContractError);
}

TEST(Umr, ArgminIsLogSqrt2Residual) {
  for (double r : {0.1, 1.0, 3.0}) {
    auto f = [&](double s) { return umr_loss(vec({r}), vec({0.0}), vec({s})).item(); };
    EXPECT_NEAR(grid_argmin(f), std::log(std::numbers::sqrt2 * r), 2e-3) << "r=" << r;
  }
}

TEST(Uncertainty, GradCheck) {
  ModelParams p(Role::student);
  auto& fs = p.add("fs", random_tensor({1, 3, 2, 2}, 1, -1.0, 1.0, true));
  auto& s = p.add("s", random_tensor({1, 1, 2, 2}, 2, -2.0, 2.0, true));
  auto& ds = p.add("ds", random_tensor({1, 1, 2, 2}, 3, 1.0, 5.0, true));
  auto ft = random_tensor({1, 3, 2, 2}, 4);
  auto dt = random_tensor({1, 1, 2, 2}, 5, 6.0, 9.0);  // residual bounded away from 0
  auto r = check(p, [&] { return umf_level(ft, fs, s) + umr_loss(dt, ds, s); });
  EXPECT_TRUE(r.passed) << r.failure;
}

// ---- scale-invariant log loss -------------------------------------------

TEST(Silog, Examples) {
  auto gt = random_tensor({1, 1, 4, 4}, 1, 1.0, 80.0);
  EXPECT_EQ(silog_loss(gt, gt).item(), 0.0);
  EXPECT_NEAR(silog_loss(gt * std::numbers::e, gt).item(), 3.872983, 1e-6);
  EXPECT_NEAR(silog_loss(gt * std::numbers::e, gt).item(), 10.0 * std::sqrt(0.15), 1e-12);
  EXPECT_LE(silog_loss(gt * 3.7, gt, {}, 10.0, 1.0).item(), 1e-12);
  EXPECT_THROW(silog_loss(gt, gt * -1.0), ContractError);
  EXPECT_THROW(silog_loss(gt, gt, {}, 10.0, 1.5), ConfigError);
}

TEST(Silog, MatchesDirectFormula) {
  auto p = random_tensor({1, 1, 5, 5}, 2, 1.0, 80.0);
  auto g = random_tensor({1, 1, 5, 5}, 3, 1.0, 80.0);
  double m = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < 25; ++i) {
    const double d = std::log(p[i]) - std::log(g[i]);
    m += d / 25.0;
    m2 += d * d / 25.0;
  }
  EXPECT_NEAR(silog_loss(p, g).item(), 10.0 * std::sqrt(m2 - 0.85 * m * m), 1e-12);
}

TEST(Silog, GradCheck) {
  ModelParams p(Role::student);
  auto& pred = p.add("pred", random_tensor({1, 1, 3, 3}, 1, 1.0, 80.0, true));
  auto gt = random_tensor({1, 1, 3, 3}, 2, 1.0, 80.0);
  auto mask = Tensor::from_data({1, 1, 3, 3}, {1, 1, 0, 1, 1, 1, 0, 1, 1});
  auto r = check(p, [&] { return silog_loss(pred, gt, mask); });
  EXPECT_TRUE(r.passed) << r.failure;
}

// ---- combined objective -------------------------------------------------

namespace {

struct Fixture {
  nets::NetOutput student, teacher;
  ModelParams params{Role::student};
  ModelParams adapter = init_adapter(1);
  Tensor gt, mask;

  Fixture() {
    params = nets::init_params(Role::student, 2);
    auto pt = nets::init_params(Role::teacher, 3);
    auto l = random_tensor({2, 3, 32, 32}, 4, 0.0, 1.0);
    auto r = random_tensor({2, 3, 32, 32}, 5, 0.0, 1.0);
    {
      NoGradGuard g;
      teacher = nets::teacher_forward(l, r, pt);
    }
    student = nets::student_forward(l, params);
    gt = random_tensor({2, 1, 32, 32}, 6, 4.0, 60.0);
    std::vector<double> m(gt.numel(), 1.0);
    for (std::size_t i = 0; i < m.size(); i += 7) m[i] = 0.0;
    mask = Tensor::from_data(gt.shape(), m);
  }
};

}  // namespace

TEST(Total, DefaultWeights) {
  DistillConfig c;
  EXPECT_EQ(c.lambda1, 0.9);
  EXPECT_EQ(c.lambda2, 0.6);
  EXPECT_EQ(c.lambda3, 0.8);
  EXPECT_DOUBLE_EQ(1.0 + c.lambda1 + c.lambda2 + c.lambda3, 3.3);
}

TEST(Total, BookkeepingIdentityAcrossVariants) {
  Fixture fx;
  for (int variant = 0; variant < 5; ++variant) {
    DistillConfig c;
    c.distill = variant != 1;
    c.focal = variant != 2;
    c.uem = variant != 3;
    c.attention = variant != 4;
    auto r = total_student_loss(fx.student, fx.teacher, fx.adapter, fx.gt, fx.mask, c);
    const auto& b = r.breakdown;
    EXPECT_EQ(b.total, b.l_b + b.lambda1 * b.l_umr + b.lambda2 * b.l_umf + b.lambda3 * b.l_focal)
        << "variant " << variant;
    EXPECT_TRUE(std::isfinite(b.total));
    if (!c.distill) {
      EXPECT_EQ(b.l_umr, 0.0);
      EXPECT_EQ(b.l_umf, 0.0);
      EXPECT_EQ(b.l_focal, 0.0);
    }
    if (c.distill && !c.focal) EXPECT_EQ(b.l_focal, 0.0);
    if (c.distill && !c.uem) EXPECT_NEAR(b.l_umf, 0.5 * (b.l_e + b.l_d), 1e-15);
    if (c.distill) {
      EXPECT_GT(b.p_d, 0.0);
      EXPECT_LE(b.p_d, 1.0);
    }
  }
}

TEST(Total, TeacherReceivesNoGradient) {
  Fixture fx;
  auto pt = nets::init_params(Role::teacher, 3);
  auto l = random_tensor({1, 3, 32, 32}, 4, 0.0, 1.0);
  auto teacher = nets::teacher_forward(l, l, pt);  // graph built on purpose
  auto student = nets::student_forward(l, fx.params);
  auto r = total_student_loss(student, teacher, fx.adapter, slice_batch(fx.gt, 0), {}, {});
  r.total.backward();
  for (const auto& [name, t] : pt) EXPECT_FALSE(t.has_grad()) << name;
  EXPECT_TRUE(fx.params.at("stem.w").has_grad());
  EXPECT_TRUE(fx.adapter.at("adapt.enc2.wq").has_grad());
}

TEST(Total, GradientSuitePassesAcrossSeeds) {
  for (std::uint64_t seed : {0u, 1u, 7u}) {
    for (const auto& r : gradient_suite(seed)) {
      EXPECT_TRUE(r.report.passed) << "seed " << seed << " " << r.loss << ": " << r.report.failure
                                   << " worst=" << r.report.worst();
    }
  }
}
