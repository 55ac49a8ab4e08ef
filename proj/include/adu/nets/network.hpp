#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "adu/core/params.hpp"
#include "adu/core/tensor.hpp"

namespace adu::nets {

/// Channel widths of the pyramid levels at 1/4, 1/8, 1/16, 1/32.
inline constexpr std::array<std::size_t, 4> kLevelChannels{16, 32, 64, 128};
inline constexpr std::size_t kStemChannels = 8;
inline constexpr std::size_t kNumLevels = 4;
/// Inputs must be divisible by the coarsest stride.
inline constexpr std::size_t kInputMultiple = 32;

inline constexpr double kDepthMin = 1.0;
inline constexpr double kDepthMax = 80.0;
inline constexpr double kLogVarMin = -6.0;
inline constexpr double kLogVarMax = 6.0;

struct FeaturePyramid {
  std::array<Tensor, kNumLevels> levels;  // finest first
};

struct NetOutput {
  FeaturePyramid enc;
  FeaturePyramid dec;
  Tensor depth;    // N x 1 x H x W, meters, in [kDepthMin, kDepthMax]
  Tensor log_var;  // N x 1 x H x W, in [kLogVarMin, kLogVarMax]
};

std::size_t input_channels(Role role);

/// Kaiming fan-in uniform weights, zero biases. Teacher stem takes the
/// six-channel left/right concatenation, student stem a single RGB image.
/// Both carry the depth head and the uncertainty head.
ModelParams init_params(Role role, std::uint64_t seed);

/// N x 3 x H x W image batch with values in [0, 1].
NetOutput student_forward(const Tensor& image, const ModelParams& params);
/// Channel concatenation [left; right] through the six-channel stem.
NetOutput teacher_forward(const Tensor& left, const Tensor& right, const ModelParams& params);

/// conv 3x3 -> sigmoid -> affine onto [kLogVarMin, kLogVarMax], resized to out_h x out_w.
Tensor uem_forward(const Tensor& finest_dec, const ModelParams& params, std::size_t out_h,
                   std::size_t out_w);

/// Repeated 2x2 mean pooling of a full-resolution N x 1 x H x W map down to
/// the four pyramid scales (1/4 ... 1/32).
std::array<Tensor, kNumLevels> rearrange_logvar(const Tensor& log_var);

}  // namespace adu::nets
