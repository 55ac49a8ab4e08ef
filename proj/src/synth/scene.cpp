#include "adu/synth/scene.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "adu/error.hpp"

namespace adu::synth {

namespace {

// Highest image-space texture frequency, cycles per pixel.
constexpr double kMaxImageFrequency = 0.45;

double quantize8(double c) { return std::round(std::clamp(c, 0.0, 1.0) * 255.0) / 255.0; }

double texture(double freq_x, double freq_y, double phase, double x_m, double y_m) {
  return 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * (freq_x * x_m + freq_y * y_m) + phase);
}

// Rescales a scene-space frequency so its image-space frequency at depth z
// stays below the cap.
void cap_frequency(double& fx, double& fy, double depth_m, double focal_px) {
  const double image_freq = std::hypot(fx, fy) * depth_m / focal_px;
  if (image_freq > kMaxImageFrequency) {
    const double s = kMaxImageFrequency / image_freq;
    fx *= s;
    fy *= s;
  }
}

}  // namespace

long CameraRig::pixel_shift(double depth_m) const {
  return -static_cast<long>(std::floor(0.5 - disparity(depth_m)));
}

void CameraRig::validate(double nearest_depth_m) const {
  if (!(focal_px > 0.0)) throw ConfigError("focal_px must be positive");
  if (!(baseline_m > 0.0)) throw ConfigError("baseline_m must be positive");
  if (width == 0 || height == 0) throw ConfigError("image extents must be positive");
  if (!(nearest_depth_m > 0.0)) throw ConfigError("nearest depth must be positive");
  if (disparity(nearest_depth_m) >= static_cast<double>(width)) {
    throw ConfigError("disparity " + std::to_string(disparity(nearest_depth_m)) +
                      " px at nearest depth exceeds image width");
  }
}

bool Primitive::covers(double u, double v) const {
  const double du = (u - center_u) / half_w;
  const double dv = (v - center_v) / half_h;
  if (kind == PrimitiveKind::rectangle) return std::abs(du) <= 1.0 && std::abs(dv) <= 1.0;
  return du * du + dv * dv <= 1.0;
}

void GenConfig::validate() const {
  if (!(z_min < z_max)) throw ConfigError("empty depth range");
  if (z_min < 4.0 || z_max > 60.0) throw ConfigError("depth range must lie within [4, 60] m");
  if (!(background_min <= background_max) || !(primitive_min <= primitive_max)) {
    throw ConfigError("empty depth range");
  }
  if (background_min < z_min || background_max > z_max || primitive_min < z_min ||
      primitive_max > z_max) {
    throw ConfigError("background/primitive depths must lie within [z_min, z_max]");
  }
  if (min_primitives < 3 || max_primitives > 8 || min_primitives > max_primitives) {
    throw ConfigError("primitive count range must lie within [3, 8]");
  }
  if (!(world_half_extent_min > 0.0) || world_half_extent_min > world_half_extent_max) {
    throw ConfigError("invalid primitive extent range");
  }
  rig.validate(z_min);
}

Scene generate_scene(std::uint64_t seed, const GenConfig& config) {
  config.validate();
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  const CameraRig& rig = config.rig;

  Scene scene;
  scene.seed = seed;
  scene.background_depth_m = uniform(config.background_min, config.background_max);
  for (auto& c : scene.background_color) c = uniform(0.2, 0.8);
  {
    const double f = uniform(0.2, 0.6);
    const double angle = uniform(0.0, std::numbers::pi);
    scene.background_freq_x = f * std::cos(angle);
    scene.background_freq_y = f * std::sin(angle);
    cap_frequency(scene.background_freq_x, scene.background_freq_y, scene.background_depth_m,
                  rig.focal_px);
  }
  scene.background_phase = uniform(0.0, 2.0 * std::numbers::pi);

  const auto count = std::uniform_int_distribution<std::size_t>(config.min_primitives,
                                                                 config.max_primitives)(rng);
  for (std::size_t i = 0; i < count; ++i) {
    Primitive p;
    p.kind = uniform(0.0, 1.0) < 0.5 ? PrimitiveKind::rectangle : PrimitiveKind::ellipse;
    p.depth_m = uniform(config.primitive_min, config.primitive_max);
    p.center_u = uniform(0.0, static_cast<double>(rig.width));
    p.center_v = uniform(0.0, static_cast<double>(rig.height));
    // World-size extents: apparent size falls off as 1/Z.
    p.half_w = rig.focal_px *
               uniform(config.world_half_extent_min, config.world_half_extent_max) / p.depth_m;
    p.half_h = rig.focal_px *
               uniform(config.world_half_extent_min, config.world_half_extent_max) / p.depth_m;
    for (auto& c : p.color) c = uniform(0.1, 0.9);
    const double f = uniform(0.5, 1.5);
    const double angle = uniform(0.0, std::numbers::pi);
    p.freq_x = f * std::cos(angle);
    p.freq_y = f * std::sin(angle);
    cap_frequency(p.freq_x, p.freq_y, p.depth_m, rig.focal_px);
    p.phase = uniform(0.0, 2.0 * std::numbers::pi);
    scene.primitives.push_back(p);
  }
  return scene;
}

double surface_depth(const Scene& scene, int surface) {
  return surface < 0 ? scene.background_depth_m
                     : scene.primitives[static_cast<std::size_t>(surface)].depth_m;
}

std::array<double, 3> surface_color(const Scene& scene, int surface, double u, double v,
                                    const CameraRig& rig) {
  const double z = surface_depth(scene, surface);
  const double cx = 0.5 * static_cast<double>(rig.width);
  const double cy = 0.5 * static_cast<double>(rig.height);
  const double x_m = (u - cx) * z / rig.focal_px;
  const double y_m = (v - cy) * z / rig.focal_px;
  std::array<double, 3> base;
  double t;
  if (surface < 0) {
    base = scene.background_color;
    t = texture(scene.background_freq_x, scene.background_freq_y, scene.background_phase, x_m,
                y_m);
  } else {
    const auto& p = scene.primitives[static_cast<std::size_t>(surface)];
    base = p.color;
    t = texture(p.freq_x, p.freq_y, p.phase, x_m, y_m);
  }
  std::array<double, 3> out;
  for (std::size_t c = 0; c < 3; ++c) out[c] = quantize8(base[c] * (0.55 + 0.45 * t));
  return out;
}

int visible_surface(const Scene& scene, double u, double v) {
  int best = -1;
  double best_z = scene.background_depth_m;
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    const auto& p = scene.primitives[i];
    if (p.depth_m < best_z && p.covers(u, v)) {
      best = static_cast<int>(i);
      best_z = p.depth_m;
    }
  }
  return best;
}

StereoSample render_pair(const Scene& scene, const CameraRig& rig, std::string id) {
  double nearest = scene.background_depth_m;
  for (const auto& p : scene.primitives) nearest = std::min(nearest, p.depth_m);
  rig.validate(nearest);

  StereoSample s;
  s.rig = rig;
  s.id = std::move(id);
  s.left = Image(rig.width, rig.height);
  s.right = Image(rig.width, rig.height);
  s.depth_gt = Map2D(rig.width, rig.height);

  for (std::size_t y = 0; y < rig.height; ++y) {
    const double v = static_cast<double>(y);
    for (std::size_t x = 0; x < rig.width; ++x) {
      const double u = static_cast<double>(x);
      const int surf = visible_surface(scene, u, v);
      s.depth_gt.at(x, y) = surface_depth(scene, surf);
      const auto col = surface_color(scene, surf, u, v, rig);
      for (std::size_t c = 0; c < 3; ++c) s.left.at(x, y, c) = col[c];
    }
  }

  // Right view: surface k is seen at right column j where it covers left
  // column j + shift(Z_k). Nearest covering surface wins.
  const long bg_shift = rig.pixel_shift(scene.background_depth_m);
  std::vector<long> shifts;
  for (const auto& p : scene.primitives) shifts.push_back(rig.pixel_shift(p.depth_m));
  for (std::size_t y = 0; y < rig.height; ++y) {
    const double v = static_cast<double>(y);
    for (std::size_t x = 0; x < rig.width; ++x) {
      int best = -1;
      double best_z = scene.background_depth_m;
      double best_u = static_cast<double>(static_cast<long>(x) + bg_shift);
      for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
        const auto& p = scene.primitives[i];
        const double u = static_cast<double>(static_cast<long>(x) + shifts[i]);
        if (p.depth_m < best_z && p.covers(u, v)) {
          best = static_cast<int>(i);
          best_z = p.depth_m;
          best_u = u;
        }
      }
      const auto col = surface_color(scene, best, best_u, v, rig);
      for (std::size_t c = 0; c < 3; ++c) s.right.at(x, y, c) = col[c];
    }
  }
  return s;
}

}  // namespace adu::synth
