#pragma once

#include <array>
#include <cstdint>

#include "adu/core/params.hpp"
#include "adu/core/tensor.hpp"
#include "adu/nets/network.hpp"

// Distillation objective for the monocular student. Masks are tensors of the
// depth-map shape whose nonzero entries select valid pixels; an undefined
// (default-constructed) mask selects every pixel.

namespace adu::distill {

inline constexpr double kScoreFloor = 1e-4;      // lower clamp of p_d
inline constexpr double kTeacherDepthEps = 1e-3;  // meters

struct DistillConfig {
  double lambda1 = 0.9;  // response (umr)
  double lambda2 = 0.6;  // feature (umf)
  double lambda3 = 0.8;  // focal-depth
  double alpha_d = 1.0;
  double gamma = 2.0;
  double silog_alpha = 10.0;
  double silog_lambda = 0.85;
  bool distill = true;    // false: supervised baseline, L_b only
  bool focal = true;      // false: drop L_focal
  bool uem = true;        // false: unweighted feature L2 + mean L1 response
  bool attention = true;  // false: per-level linear projection adapter
};

struct LossBreakdown {
  double l_b = 0.0;
  double l_umr = 0.0;
  double l_umf = 0.0;
  double l_focal = 0.0;
  double l_e = 0.0;
  double l_d = 0.0;
  double l_rd = 0.0;
  double p_d = 0.0;
  double total = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double lambda3 = 0.0;
};

struct LossResult {
  Tensor total;
  LossBreakdown breakdown;
};

// ---- adaptation ---------------------------------------------------------

/// Adapter projections (query, key, value; C x C each) for the four encoder
/// and four decoder levels. Queries/keys: fan-in uniform; values: identity.
ModelParams init_adapter(std::uint64_t seed);

/// Scaled dot-product self-attention over the h*w spatial tokens of each
/// image: softmax(Q K^T / sqrt(C)) V with Q, K, V = tokens * W_{Q,K,V}.
Tensor attention_adapt(const Tensor& feature, const Tensor& wq, const Tensor& wk,
                       const Tensor& wv);
/// tokens * W_V, i.e. a 1x1 convolution.
Tensor linear_adapt(const Tensor& feature, const Tensor& wv);

/// Applies the configured adapter to all levels of one pyramid.
/// `branch` is "enc" or "dec".
nets::FeaturePyramid adapt_pyramid(const nets::FeaturePyramid& student, const ModelParams& adapter,
                                   const char* branch, bool attention);

// ---- individual terms ---------------------------------------------------

/// Mean squared difference of one level.
Tensor feature_distill(const Tensor& teacher, const Tensor& student_adapted);
/// Level mean of feature_distill over a pyramid (one of L_e, L_d).
Tensor feature_distill(const nets::FeaturePyramid& teacher,
                       const nets::FeaturePyramid& student_adapted);

/// 1 - mean |(d_t - d_s) / d_t| over the mask, clamped to [kScoreFloor, 1].
Tensor depth_distill_score(const Tensor& teacher_depth, const Tensor& student_depth,
                           const Tensor& mask = {});

/// -alpha_d (1 - p_d)^gamma log(p_d).
Tensor focal_depth_loss(const Tensor& p_d, double alpha_d, double gamma);

/// Sum of |d_t - d_s| over masked pixels.
Tensor response_distill_l1(const Tensor& teacher_depth, const Tensor& student_depth,
                           const Tensor& mask = {});
/// Mean of |d_t - d_s| over masked pixels.
Tensor response_distill_l1_mean(const Tensor& teacher_depth, const Tensor& student_depth,
                                const Tensor& mask = {});

/// One level: mean of 0.5 exp(-s) (f_t - f_s)^2 + 0.5 s with s (N x 1 x h x w)
/// broadcast over channels.
Tensor umf_level(const Tensor& teacher, const Tensor& student_adapted, const Tensor& log_var);
/// Average of umf_level over the four encoder and four decoder levels.
Tensor umf_loss(const nets::FeaturePyramid& teacher_enc, const nets::FeaturePyramid& student_enc,
                const nets::FeaturePyramid& teacher_dec, const nets::FeaturePyramid& student_dec,
                const std::array<Tensor, nets::kNumLevels>& log_var_pyramid);

/// Mean over masked pixels of sqrt(2) exp(-s) |d_t - d_s| + s.
Tensor umr_loss(const Tensor& teacher_depth, const Tensor& student_depth, const Tensor& log_var,
                const Tensor& mask = {});

/// alpha * sqrt(mean g^2 - lambda (mean g)^2), g = log pred - log gt.
Tensor silog_loss(const Tensor& pred, const Tensor& gt, const Tensor& mask = {},
                  double alpha = 10.0, double lambda = 0.85);

// ---- combined objective -------------------------------------------------

/// L_b + lambda1 L_umr + lambda2 L_umf + lambda3 L_focal, or the ablation
/// variant selected by `config`. Teacher outputs are detached here; `teacher`
/// may be empty when config.distill is false. Throws NonFiniteError naming
/// the offending term.
LossResult total_student_loss(const nets::NetOutput& student, const nets::NetOutput& teacher,
                              const ModelParams& adapter, const Tensor& gt_depth,
                              const Tensor& mask, const DistillConfig& config);

}  // namespace adu::distill
