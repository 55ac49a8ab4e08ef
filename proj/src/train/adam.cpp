#include "adu/train/adam.hpp"

#include <cmath>
#include <string>

#include "adu/error.hpp"

namespace adu::train {

void adam_step(ModelParams& params, AdamState& state, const AdamOptions& o) {
  if (state.m.empty()) {
    for (const auto& [name, t] : params) {
      state.m.emplace_back(t.numel(), 0.0);
      state.v.emplace_back(t.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw ContractError("adam_step: optimizer state does not match the parameter registry");
  }
  for (const auto& [name, t] : params) {
    if (!t.has_grad()) continue;
    for (double g : t.grad()) {
      if (!std::isfinite(g)) throw NonFiniteError("non-finite gradient in parameter " + name);
    }
  }

  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  std::size_t i = 0;
  for (auto& [name, tensor] : params) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    ++i;
    if (m.size() != tensor.numel()) throw ContractError("adam_step: state size mismatch at " + name);
    auto w = tensor.mutable_data();
    const bool has = tensor.has_grad();
    auto g = has ? tensor.grad() : std::span<const double>{};
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = has ? g[k] : 0.0;
      m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * gk;
      v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * gk * gk;
      w[k] -= o.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + o.eps);
    }
  }
}

}  // namespace adu::train
