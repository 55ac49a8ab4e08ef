#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "adu/core/params.hpp"

namespace adu {

struct GradEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t probed = 0;
};

struct GradReport {
  std::vector<GradEntry> entries;
  double epsilon = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string failure;  // empty when passed

  double worst() const;
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  std::size_t coords_per_tensor = 32;
  std::uint64_t seed = 0;
};

/// Relative error |a - f| / max(|a|, |f|, 1e-8).
double relative_error(double analytic, double numeric);

/// Compares reverse-mode gradients of `loss_fn` against central finite
/// differences on a seeded subset of coordinates of every parameter.
/// `loss_fn` must rebuild its graph from the current parameter values.
GradReport grad_check(const std::function<Tensor()>& loss_fn, ModelParams& params,
                      const GradCheckOptions& options);
GradReport grad_check(const std::function<Tensor()>& loss_fn, ModelParams& params,
                      double epsilon = 1e-5);

}  // namespace adu
