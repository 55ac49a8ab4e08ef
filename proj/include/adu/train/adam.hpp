#pragma once

#include <cstdint>
#include <vector>

#include "adu/core/params.hpp"

namespace adu::train {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moments, one buffer per parameter tensor in registry order.
struct AdamState {
  std::uint64_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One bias-corrected Adam update from the gradients accumulated on `params`.
/// Parameters without a gradient are treated as having a zero gradient.
/// Throws NonFiniteError naming the first parameter with a non-finite
/// gradient; nothing is modified in that case.
void adam_step(ModelParams& params, AdamState& state, const AdamOptions& options);

}  // namespace adu::train
