#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adu/core/gradcheck.hpp"

namespace adu::distill {

struct NamedReport {
  std::string loss;
  GradReport report;
};

/// Finite-difference check of every loss term and of the combined objective
/// (default and ablation variants) on inputs drawn from `seed`.
std::vector<NamedReport> gradient_suite(std::uint64_t seed);

}  // namespace adu::distill
