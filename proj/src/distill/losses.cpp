#include "adu/distill/losses.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <string>

#include "adu/core/ops.hpp"
#include "adu/error.hpp"

namespace adu::distill {

namespace {

using nets::FeaturePyramid;
using nets::kNumLevels;

// Flat indices of valid pixels, or nullopt when every pixel is valid.
std::optional<std::vector<std::size_t>> mask_indices(const Tensor& mask, const Shape& shape) {
  if (!mask.defined()) return std::nullopt;
  if (mask.shape() != shape) {
    throw ShapeError("mask shape " + shape_str(mask.shape()) + " does not match " +
                     shape_str(shape));
  }
  std::vector<std::size_t> idx;
  auto m = mask.data();
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i] != 0.0) idx.push_back(i);
  }
  if (idx.empty()) throw ContractError("mask selects no pixels");
  return idx;
}

Tensor select(const Tensor& x, const std::optional<std::vector<std::size_t>>& idx) {
  return idx ? gather_flat(x, *idx) : x;
}

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

FeaturePyramid detach(const FeaturePyramid& p) {
  FeaturePyramid out;
  for (std::size_t l = 0; l < kNumLevels; ++l) out.levels[l] = p.levels[l].detach();
  return out;
}

template <class F>
Tensor named_term(const char* name, F&& f) {
  try {
    return f();
  } catch (const NonFiniteError& e) {
    throw NonFiniteError(std::string("loss term ") + name + " is non-finite: " + e.what());
  }
}

std::string level_name(const char* branch, std::size_t l) {
  return std::string("adapt.") + branch + std::to_string(l);
}

}  // namespace

ModelParams init_adapter(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelParams p(Role::adapter);
  for (const char* branch : {"enc", "dec"}) {
    for (std::size_t l = 0; l < kNumLevels; ++l) {
      const std::size_t c = nets::kLevelChannels[l];
      const double bound = std::sqrt(6.0 / static_cast<double>(c));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (const char* proj : {"wq", "wk"}) {
        std::vector<double> w(c * c);
        for (auto& v : w) v = u(rng);
        p.add(level_name(branch, l) + "." + proj, Tensor::from_data({c, c}, std::move(w), true));
      }
      std::vector<double> eye(c * c, 0.0);
      for (std::size_t i = 0; i < c; ++i) eye[i * c + i] = 1.0;
      p.add(level_name(branch, l) + ".wv", Tensor::from_data({c, c}, std::move(eye), true));
    }
  }
  return p;
}

Tensor attention_adapt(const Tensor& feature, const Tensor& wq, const Tensor& wk,
                       const Tensor& wv) {
  if (feature.rank() != 4) throw ShapeError("attention_adapt: feature must be N x C x h x w");
  const std::size_t n = feature.dim(0), c = feature.dim(1), h = feature.dim(2), w = feature.dim(3);
  for (const Tensor* m : {&wq, &wk, &wv}) {
    if (m->shape() != Shape{c, c}) {
      throw ShapeError("attention_adapt: projection " + shape_str(m->shape()) +
                       " does not match " + std::to_string(c) + " channels");
    }
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(c));
  std::vector<Tensor> outs;
  outs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor tokens = transpose2d(reshape(slice_batch(feature, i), {c, h * w}));
    Tensor q = matmul(tokens, wq);
    Tensor k = matmul(tokens, wk);
    Tensor v = matmul(tokens, wv);
    Tensor attn = softmax_lastdim(matmul(q, transpose2d(k)) * scale);
    outs.push_back(reshape(transpose2d(matmul(attn, v)), {1, c, h, w}));
  }
  return n == 1 ? outs.front() : concat_batch(outs);
}

Tensor linear_adapt(const Tensor& feature, const Tensor& wv) {
  if (feature.rank() != 4) throw ShapeError("linear_adapt: feature must be N x C x h x w");
  const std::size_t n = feature.dim(0), c = feature.dim(1), h = feature.dim(2), w = feature.dim(3);
  if (wv.shape() != Shape{c, c}) throw ShapeError("linear_adapt: projection does not match C");
  std::vector<Tensor> outs;
  outs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor tokens = transpose2d(reshape(slice_batch(feature, i), {c, h * w}));
    outs.push_back(reshape(transpose2d(matmul(tokens, wv)), {1, c, h, w}));
  }
  return n == 1 ? outs.front() : concat_batch(outs);
}

FeaturePyramid adapt_pyramid(const FeaturePyramid& student, const ModelParams& adapter,
                             const char* branch, bool attention) {
  FeaturePyramid out;
  for (std::size_t l = 0; l < kNumLevels; ++l) {
    const std::string base = level_name(branch, l);
    out.levels[l] = attention ? attention_adapt(student.levels[l], adapter.at(base + ".wq"),
                                                adapter.at(base + ".wk"), adapter.at(base + ".wv"))
                              : linear_adapt(student.levels[l], adapter.at(base + ".wv"));
  }
  return out;
}

Tensor feature_distill(const Tensor& teacher, const Tensor& student_adapted) {
  require_same(teacher, student_adapted, "feature_distill");
  return mean(square(teacher.detach() - student_adapted));
}

Tensor feature_distill(const FeaturePyramid& teacher, const FeaturePyramid& student_adapted) {
  Tensor total = feature_distill(teacher.levels[0], student_adapted.levels[0]);
  for (std::size_t l = 1; l < kNumLevels; ++l) {
    total = total + feature_distill(teacher.levels[l], student_adapted.levels[l]);
  }
  return total * (1.0 / kNumLevels);
}

Tensor depth_distill_score(const Tensor& teacher_depth, const Tensor& student_depth,
                           const Tensor& mask) {
  require_same(teacher_depth, student_depth, "depth_distill_score");
  const auto idx = mask_indices(mask, teacher_depth.shape());
  Tensor dt = select(teacher_depth.detach(), idx);
  for (double v : dt.data()) {
    if (!(v > kTeacherDepthEps)) {
      throw ContractError("depth_distill_score: teacher depth must exceed 1e-3 m on the mask");
    }
  }
  Tensor ds = select(student_depth, idx);
  Tensor rel = mean(abs((dt - ds) / dt));
  return clamp(neg(rel) + 1.0, kScoreFloor, 1.0);
}

Tensor focal_depth_loss(const Tensor& p_d, double alpha_d, double gamma) {
  if (gamma < 0.0) throw ConfigError("focal_depth_loss: gamma must be non-negative");
  return pow_scalar(neg(p_d) + 1.0, gamma) * log(p_d) * (-alpha_d);
}

Tensor response_distill_l1(const Tensor& teacher_depth, const Tensor& student_depth,
                           const Tensor& mask) {
  require_same(teacher_depth, student_depth, "response_distill_l1");
  const auto idx = mask_indices(mask, teacher_depth.shape());
  return sum(abs(select(teacher_depth.detach(), idx) - select(student_depth, idx)));
}

Tensor response_distill_l1_mean(const Tensor& teacher_depth, const Tensor& student_depth,
                                const Tensor& mask) {
  require_same(teacher_depth, student_depth, "response_distill_l1_mean");
  const auto idx = mask_indices(mask, teacher_depth.shape());
  return mean(abs(select(teacher_depth.detach(), idx) - select(student_depth, idx)));
}

Tensor umf_level(const Tensor& teacher, const Tensor& student_adapted, const Tensor& log_var) {
  require_same(teacher, student_adapted, "umf_level");
  if (log_var.rank() != 4 || log_var.dim(0) != teacher.dim(0) || log_var.dim(1) != 1 ||
      log_var.dim(2) != teacher.dim(2) || log_var.dim(3) != teacher.dim(3)) {
    throw ShapeError("umf_level: log-variance " + shape_str(log_var.shape()) +
                     " does not match feature scale " + shape_str(teacher.shape()));
  }
  Tensor s = broadcast_channels(log_var, teacher.dim(1));
  Tensor weighted = exp(neg(s)) * square(teacher.detach() - student_adapted) * 0.5;
  return mean(weighted + s * 0.5);
}

Tensor umf_loss(const FeaturePyramid& teacher_enc, const FeaturePyramid& student_enc,
                const FeaturePyramid& teacher_dec, const FeaturePyramid& student_dec,
                const std::array<Tensor, kNumLevels>& log_var_pyramid) {
  Tensor total = umf_level(teacher_enc.levels[0], student_enc.levels[0], log_var_pyramid[0]);
  for (std::size_t l = 1; l < kNumLevels; ++l) {
    total = total + umf_level(teacher_enc.levels[l], student_enc.levels[l], log_var_pyramid[l]);
  }
  for (std::size_t l = 0; l < kNumLevels; ++l) {
    total = total + umf_level(teacher_dec.levels[l], student_dec.levels[l], log_var_pyramid[l]);
  }
  return total * (1.0 / (2 * kNumLevels));
}

Tensor umr_loss(const Tensor& teacher_depth, const Tensor& student_depth, const Tensor& log_var,
                const Tensor& mask) {
  require_same(teacher_depth, student_depth, "umr_loss");
  require_same(teacher_depth, log_var, "umr_loss");
  const auto idx = mask_indices(mask, teacher_depth.shape());
  Tensor s = select(log_var, idx);
  Tensor resid = abs(select(teacher_depth.detach(), idx) - select(student_depth, idx));
  return mean(exp(neg(s)) * resid * std::numbers::sqrt2 + s);
}

Tensor silog_loss(const Tensor& pred, const Tensor& gt, const Tensor& mask, double alpha,
                  double lambda) {
  require_same(pred, gt, "silog_loss");
  if (lambda < 0.0 || lambda > 1.0) throw ConfigError("silog_loss: lambda must be in [0, 1]");
  const auto idx = mask_indices(mask, pred.shape());
  Tensor p = select(pred, idx);
  Tensor g = select(gt.detach(), idx);
  for (double v : p.data()) {
    if (!(v > 0.0)) throw ContractError("silog_loss: non-positive prediction on mask");
  }
  for (double v : g.data()) {
    if (!(v > 0.0)) throw ContractError("silog_loss: non-positive ground truth on mask");
  }
  Tensor diff = log(p) - log(g);
  Tensor m = mean(diff);
  // mean(g^2) - lambda mean(g)^2 == var(g) + (1 - lambda) mean(g)^2, non-negative.
  // var(g) is centered on a constant copy c of the mean; subtracting (m - c)^2,
  // which is zero in value, restores the gradient through m.
  const double c = m.item();
  Tensor var = mean(square(diff - Tensor::full(diff.shape(), c))) - square(m - c);
  Tensor radicand = var + square(m) * (1.0 - lambda);
  return sqrt(radicand) * alpha;
}

LossResult total_student_loss(const nets::NetOutput& student, const nets::NetOutput& teacher,
                              const ModelParams& adapter, const Tensor& gt_depth,
                              const Tensor& mask, const DistillConfig& config) {
  LossResult r;
  LossBreakdown& b = r.breakdown;
  b.lambda1 = config.lambda1;
  b.lambda2 = config.lambda2;
  b.lambda3 = config.lambda3;

  Tensor l_b = named_term("l_b", [&] {
    return silog_loss(student.depth, gt_depth, mask, config.silog_alpha, config.silog_lambda);
  });
  Tensor umr = Tensor::scalar(0.0);
  Tensor umf = Tensor::scalar(0.0);
  Tensor focal = Tensor::scalar(0.0);

  if (config.distill) {
    if (!teacher.depth.defined()) throw ContractError("distillation requires teacher outputs");
    const FeaturePyramid t_enc = detach(teacher.enc);
    const FeaturePyramid t_dec = detach(teacher.dec);
    const Tensor t_depth = teacher.depth.detach();

    const FeaturePyramid s_enc = adapt_pyramid(student.enc, adapter, "enc", config.attention);
    const FeaturePyramid s_dec = adapt_pyramid(student.dec, adapter, "dec", config.attention);

    if (config.uem) {
      umr = named_term("l_umr", [&] { return umr_loss(t_depth, student.depth, student.log_var, mask); });
      umf = named_term("l_umf", [&] {
        return umf_loss(t_enc, s_enc, t_dec, s_dec, nets::rearrange_logvar(student.log_var));
      });
      NoGradGuard diagnostics;
      b.l_e = feature_distill(t_enc, s_enc).item();
      b.l_d = feature_distill(t_dec, s_dec).item();
    } else {
      Tensor l_e = named_term("l_e", [&] { return feature_distill(t_enc, s_enc); });
      Tensor l_d = named_term("l_d", [&] { return feature_distill(t_dec, s_dec); });
      b.l_e = l_e.item();
      b.l_d = l_d.item();
      umr = named_term("l_umr", [&] { return response_distill_l1_mean(t_depth, student.depth, mask); });
      umf = (l_e + l_d) * 0.5;
    }
    {
      NoGradGuard diagnostics;
      b.l_rd = response_distill_l1(t_depth, student.depth, mask).item();
    }

    const std::size_t n = student.depth.dim(0);
    Tensor focal_sum = Tensor::scalar(0.0);
    double p_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Tensor mi = mask.defined() ? slice_batch(mask, i) : Tensor{};
      Tensor p = depth_distill_score(slice_batch(t_depth, i), slice_batch(student.depth, i), mi);
      p_sum += p.item();
      if (config.focal) {
        focal_sum = focal_sum + named_term("l_focal", [&] {
                      return focal_depth_loss(p, config.alpha_d, config.gamma);
                    });
      }
    }
    b.p_d = p_sum / static_cast<double>(n);
    if (config.focal) focal = focal_sum * (1.0 / static_cast<double>(n));
  }

  r.total = named_term("total", [&] {
    return l_b + umr * config.lambda1 + umf * config.lambda2 + focal * config.lambda3;
  });
  b.l_b = l_b.item();
  b.l_umr = umr.item();
  b.l_umf = umf.item();
  b.l_focal = focal.item();
  b.total = r.total.item();
  return r;
}

}  // namespace adu::distill
