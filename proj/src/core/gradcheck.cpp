#include "adu/core/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "adu/error.hpp"

namespace adu {

double GradReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.max_rel_error);
  return w;
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

// Returns NaN instead of throwing so the caller can name the parameter.
double eval_loss(const std::function<Tensor()>& loss_fn) {
  try {
    NoGradGuard guard;
    const double v = loss_fn().item();
    return std::isfinite(v) ? v : std::nan("");
  } catch (const NonFiniteError&) {
    return std::nan("");
  }
}

}  // namespace

GradReport grad_check(const std::function<Tensor()>& loss_fn, ModelParams& params,
                      const GradCheckOptions& options) {
  GradReport report;
  report.epsilon = options.epsilon;
  report.tolerance = options.tolerance;

  params.zero_grad();
  Tensor loss;
  try {
    loss = loss_fn();
  } catch (const NonFiniteError& e) {
    report.failure = std::string("non-finite loss: ") + e.what();
    return report;
  }
  if (!std::isfinite(loss.item())) {
    report.failure = "non-finite loss";
    return report;
  }
  loss.backward();

  std::mt19937_64 rng(options.seed);
  bool ok = true;
  for (auto& [name, tensor] : params) {
    GradEntry entry{name};
    const std::size_t n = tensor.numel();
    std::vector<double> analytic(n, 0.0);
    if (tensor.has_grad()) std::copy(tensor.grad().begin(), tensor.grad().end(), analytic.begin());

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(n, options.coords_per_tensor));
    std::sort(idx.begin(), idx.end());

    auto values = tensor.mutable_data();
    for (std::size_t i : idx) {
      const double saved = values[i];
      values[i] = saved + options.epsilon;
      const double fp = eval_loss(loss_fn);
      values[i] = saved - options.epsilon;
      const double fm = eval_loss(loss_fn);
      values[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        ok = false;
        if (report.failure.empty()) report.failure = "non-finite loss while probing " + name;
        entry.max_rel_error = std::numeric_limits<double>::infinity();
        entry.worst_index = i;
        break;
      }
      const double numeric = (fp - fm) / (2.0 * options.epsilon);
      const double err = relative_error(analytic[i], numeric);
      if (err > entry.max_rel_error) {
        entry.max_rel_error = err;
        entry.worst_index = i;
      }
      ++entry.probed;
    }
    if (entry.max_rel_error >= options.tolerance) {
      ok = false;
      if (report.failure.empty()) report.failure = "gradient mismatch in " + name;
    }
    report.entries.push_back(std::move(entry));
  }
  params.zero_grad();
  report.passed = ok;
  return report;
}

GradReport grad_check(const std::function<Tensor()>& loss_fn, ModelParams& params,
                      double epsilon) {
  GradCheckOptions options;
  options.epsilon = epsilon;
  return grad_check(loss_fn, params, options);
}

}  // namespace adu
