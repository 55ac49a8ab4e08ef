#include "adu/nets/network.hpp"

#include <cmath>
#include <random>
#include <string>

#include "adu/core/ops.hpp"
#include "adu/error.hpp"

namespace adu::nets {

namespace {

void add_conv(ModelParams& p, std::mt19937_64& rng, const std::string& name, std::size_t out,
              std::size_t in, std::size_t k) {
  const double fan_in = static_cast<double>(in * k * k);
  const double bound = std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> w(out * in * k * k);
  for (auto& v : w) v = u(rng);
  p.add(name + ".w", Tensor::from_data({out, in, k, k}, std::move(w), true));
  p.add(name + ".b", Tensor::zeros({out}, true));
}

Tensor conv(const Tensor& x, const ModelParams& p, const std::string& name, std::size_t stride) {
  return conv2d(x, p.at(name + ".w"), p.at(name + ".b"), stride, 1);
}

void check_input(const Tensor& x, std::size_t channels, const char* what) {
  if (x.rank() != 4 || x.dim(1) != channels) {
    throw ShapeError(std::string(what) + ": expected N x " + std::to_string(channels) +
                     " x H x W, got " + shape_str(x.shape()));
  }
  if (x.dim(2) % kInputMultiple || x.dim(3) % kInputMultiple) {
    throw ShapeError(std::string(what) + ": H and W must be divisible by 32, got " +
                     shape_str(x.shape()));
  }
}

NetOutput forward(const Tensor& input, const ModelParams& p) {
  const std::size_t h = input.dim(2), w = input.dim(3);
  NetOutput out;

  Tensor x = relu(conv(add_scalar(input, -0.5), p, "stem", 2));
  for (std::size_t l = 0; l < kNumLevels; ++l) {
    x = relu(conv(x, p, "enc" + std::to_string(l), 2));
    out.enc.levels[l] = x;
  }

  Tensor d = relu(conv(out.enc.levels[kNumLevels - 1], p, "dec3", 1));
  out.dec.levels[kNumLevels - 1] = d;
  for (std::size_t l = kNumLevels - 1; l-- > 0;) {
    d = concat_channels(upsample_nearest2(d), out.enc.levels[l]);
    d = relu(conv(d, p, "dec" + std::to_string(l), 1));
    out.dec.levels[l] = d;
  }

  Tensor depth = sigmoid(conv(out.dec.levels[0], p, "head", 1)) * (kDepthMax - kDepthMin);
  out.depth = bilinear_resize(add_scalar(depth, kDepthMin), h, w);
  out.log_var = uem_forward(out.dec.levels[0], p, h, w);
  return out;
}

}  // namespace

std::size_t input_channels(Role role) {
  switch (role) {
    case Role::teacher: return 6;
    case Role::student: return 3;
    default: throw ContractError("networks exist only for teacher and student roles");
  }
}

ModelParams init_params(Role role, std::uint64_t seed) {
  const std::size_t in = input_channels(role);
  std::mt19937_64 rng(seed);
  ModelParams p(role);
  add_conv(p, rng, "stem", kStemChannels, in, 3);
  std::size_t prev = kStemChannels;
  for (std::size_t l = 0; l < kNumLevels; ++l) {
    add_conv(p, rng, "enc" + std::to_string(l), kLevelChannels[l], prev, 3);
    prev = kLevelChannels[l];
  }
  add_conv(p, rng, "dec3", kLevelChannels[3], kLevelChannels[3], 3);
  for (std::size_t l = kNumLevels - 1; l-- > 0;) {
    add_conv(p, rng, "dec" + std::to_string(l), kLevelChannels[l],
             kLevelChannels[l + 1] + kLevelChannels[l], 3);
  }
  add_conv(p, rng, "head", 1, kLevelChannels[0], 3);
  add_conv(p, rng, "uem", 1, kLevelChannels[0], 3);
  return p;
}

NetOutput student_forward(const Tensor& image, const ModelParams& params) {
  check_input(image, 3, "student_forward");
  if (params.at("stem.w").dim(1) != 3) throw ShapeError("student_forward: stem expects 3 channels");
  return forward(image, params);
}

NetOutput teacher_forward(const Tensor& left, const Tensor& right, const ModelParams& params) {
  check_input(left, 3, "teacher_forward");
  check_input(right, 3, "teacher_forward");
  if (left.shape() != right.shape()) {
    throw ShapeError("teacher_forward: left " + shape_str(left.shape()) + " vs right " +
                     shape_str(right.shape()));
  }
  if (params.at("stem.w").dim(1) != 6) throw ShapeError("teacher_forward: stem expects 6 channels");
  return forward(concat_channels(left, right), params);
}

Tensor uem_forward(const Tensor& finest_dec, const ModelParams& params, std::size_t out_h,
                   std::size_t out_w) {
  Tensor s = sigmoid(conv(finest_dec, params, "uem", 1)) * (kLogVarMax - kLogVarMin);
  return bilinear_resize(add_scalar(s, kLogVarMin), out_h, out_w);
}

std::array<Tensor, kNumLevels> rearrange_logvar(const Tensor& log_var) {
  if (log_var.rank() != 4 || log_var.dim(1) != 1) {
    throw ShapeError("rearrange_logvar: expected N x 1 x H x W, got " +
                     shape_str(log_var.shape()));
  }
  if (log_var.dim(2) % kInputMultiple || log_var.dim(3) % kInputMultiple) {
    throw ShapeError("rearrange_logvar: H and W must be divisible by 32");
  }
  std::array<Tensor, kNumLevels> out;
  Tensor s = pool_avg2(pool_avg2(log_var));
  out[0] = s;
  for (std::size_t l = 1; l < kNumLevels; ++l) {
    s = pool_avg2(s);
    out[l] = s;
  }
  return out;
}

}  // namespace adu::nets
