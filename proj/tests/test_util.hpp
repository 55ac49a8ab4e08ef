#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "adu/core/tensor.hpp"
#include "adu/synth/io.hpp"
#include "adu/synth/scene.hpp"

namespace testutil {

inline adu::Tensor random_tensor(adu::Shape shape, std::uint64_t seed, double lo = -1.0,
                                 double hi = 1.0, bool requires_grad = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(adu::shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return adu::Tensor::from_data(std::move(shape), std::move(v), requires_grad);
}

class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("adu_test_" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

inline bool trees_identical(const std::filesystem::path& a, const std::filesystem::path& b) {
  namespace fs = std::filesystem;
  std::vector<fs::path> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
  }
  for (const auto& e : fs::recursive_directory_iterator(b)) {
    if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
  }
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb) return false;
  for (const auto& rel : fa) {
    if (adu::synth::read_file(a / rel) != adu::synth::read_file(b / rel)) return false;
  }
  return true;
}

// Counts non-occluded left pixels whose color differs from the right image at
// the nearest-pixel disparity-shifted column. Visibility in the right view is
// decided independently of the renderer: a surface at depth Z' is seen at
// right column j through the unique left column u with round(u - d') == j.
inline std::size_t count_disparity_violations(const adu::synth::StereoSample& s,
                                              const adu::synth::Scene& scene) {
  const auto& rig = s.rig;
  std::size_t bad = 0;
  const long width = static_cast<long>(rig.width);
  for (std::size_t y = 0; y < rig.height; ++y) {
    for (std::size_t x = 0; x < rig.width; ++x) {
      const double z = s.depth_gt.at(x, y);
      const double d = rig.focal_px * rig.baseline_m / z;
      const long j = static_cast<long>(std::floor(static_cast<double>(x) - d + 0.5));
      if (j < 0 || j >= width) continue;
      bool occluded = false;
      for (const auto& p : scene.primitives) {
        if (!(p.depth_m < z)) continue;
        const double dp = rig.focal_px * rig.baseline_m / p.depth_m;
        const double u = std::ceil(static_cast<double>(j) + dp - 0.5);
        if (p.covers(u, static_cast<double>(y))) {
          occluded = true;
          break;
        }
      }
      if (occluded) continue;
      for (std::size_t c = 0; c < 3; ++c) {
        if (s.right.at(static_cast<std::size_t>(j), y, c) != s.left.at(x, y, c)) {
          ++bad;
          break;
        }
      }
    }
  }
  return bad;
}

}  // namespace testutil
