#pragma once

#include <cstddef>

#include "adu/core/tensor.hpp"

// Differentiable operations on Tensor. Elementwise binaries require equal
// shapes; there is no implicit broadcasting.

namespace adu {

// Elementwise arithmetic.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double c) { return add_scalar(a, c); }
inline Tensor operator-(const Tensor& a, double c) { return add_scalar(a, -c); }
inline Tensor operator*(const Tensor& a, double c) { return mul_scalar(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul_scalar(a, c); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// Elementwise functions.
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor pow_scalar(const Tensor& a, double p);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
/// Gradient passes only where lo < a < hi.
Tensor clamp(const Tensor& a, double lo, double hi);

// Reductions to a single-element tensor of shape {1}.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Layout.
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose2d(const Tensor& a);
Tensor matmul(const Tensor& a, const Tensor& b);
/// Numerically stable softmax over the last axis.
Tensor softmax_lastdim(const Tensor& x);

// NCHW image ops.

/// Output extent floor((H + 2p - K)/s) + 1. Kernel is O x I x K x K, K odd.
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding);
/// As above with a per-output-channel bias of shape {O}.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t padding);
/// 2x2 mean pooling; H and W must be even.
Tensor pool_avg2(const Tensor& x);
Tensor upsample_nearest2(const Tensor& x);
/// Bilinear resampling with half-pixel centers (align_corners = false).
Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w);
/// Concatenate along the channel axis.
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Concatenate along the batch axis.
Tensor concat_batch(const std::vector<Tensor>& parts);
/// Sample n of a batch, keeping a leading extent of 1.
Tensor slice_batch(const Tensor& x, std::size_t n);
/// 1-D tensor of x's flat elements at `indices` (duplicates allowed).
Tensor gather_flat(const Tensor& x, const std::vector<std::size_t>& indices);
/// N x 1 x H x W -> N x C x H x W by replication.
Tensor broadcast_channels(const Tensor& x, std::size_t channels);

}  // namespace adu
