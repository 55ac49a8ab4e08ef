#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace adu::synth {

struct CameraRig {
  double focal_px = 100.0;
  double baseline_m = 0.54;
  std::size_t width = 96;
  std::size_t height = 64;

  double disparity(double depth_m) const { return focal_px * baseline_m / depth_m; }
  /// Integer column shift used by the right view: the nearest-pixel rounding
  /// of u - disparity is u - shift for every integer u.
  long pixel_shift(double depth_m) const;
  /// Throws ConfigError unless focal/baseline are positive and the disparity
  /// at `nearest_depth_m` stays below the image width.
  void validate(double nearest_depth_m) const;
};

/// Color image with interleaved RGB, row-major, values in [0, 1].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> rgb;

  Image() = default;
  Image(std::size_t w, std::size_t h) : width(w), height(h), rgb(w * h * 3, 0.0) {}
  double& at(std::size_t x, std::size_t y, std::size_t c) { return rgb[(y * width + x) * 3 + c]; }
  double at(std::size_t x, std::size_t y, std::size_t c) const {
    return rgb[(y * width + x) * 3 + c];
  }
  bool operator==(const Image&) const = default;
};

/// Single-channel float map (depth in meters, or log-variance).
struct Map2D {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;

  Map2D() = default;
  Map2D(std::size_t w, std::size_t h, double fill = 0.0)
      : width(w), height(h), values(w * h, fill) {}
  double& at(std::size_t x, std::size_t y) { return values[y * width + x]; }
  double at(std::size_t x, std::size_t y) const { return values[y * width + x]; }
  bool operator==(const Map2D&) const = default;
};

enum class PrimitiveKind { rectangle, ellipse };

/// Fronto-parallel shape at constant depth. Geometry is expressed in
/// left-image pixel coordinates; texture is a sinusoid over scene-space
/// meters so both views sample the same surface pattern.
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::rectangle;
  double depth_m = 10.0;
  double center_u = 0.0;
  double center_v = 0.0;
  double half_w = 1.0;
  double half_h = 1.0;
  std::array<double, 3> color{0.5, 0.5, 0.5};
  double freq_x = 1.0;  // cycles per meter
  double freq_y = 0.0;
  double phase = 0.0;

  bool covers(double u, double v) const;
  bool operator==(const Primitive&) const = default;
};

struct Scene {
  std::uint64_t seed = 0;
  double background_depth_m = 50.0;
  std::array<double, 3> background_color{0.5, 0.5, 0.5};
  double background_freq_x = 0.3;
  double background_freq_y = 0.0;
  double background_phase = 0.0;
  std::vector<Primitive> primitives;

  bool operator==(const Scene&) const = default;
};

struct GenConfig {
  double z_min = 4.0;
  double z_max = 60.0;
  double background_min = 40.0;
  double background_max = 60.0;
  double primitive_min = 4.0;
  double primitive_max = 30.0;
  std::size_t min_primitives = 3;
  std::size_t max_primitives = 8;
  double world_half_extent_min = 0.4;  // meters
  double world_half_extent_max = 2.0;
  CameraRig rig;

  void validate() const;
};

struct StereoSample {
  Image left;
  Image right;
  Map2D depth_gt;  // meters, left camera
  CameraRig rig;
  std::string id;
};

/// Deterministic scene from a seed.
Scene generate_scene(std::uint64_t seed, const GenConfig& config = {});

/// Z-buffered rendering of the left view and of a camera translated by the
/// baseline. Colors are quantized to 8 bits so PPM storage is lossless.
StereoSample render_pair(const Scene& scene, const CameraRig& rig, std::string id = "");

/// Surface color at left-image coordinate (u, v). Index -1 is the background.
std::array<double, 3> surface_color(const Scene& scene, int surface, double u, double v,
                                    const CameraRig& rig);
double surface_depth(const Scene& scene, int surface);

/// Index of the visible surface at left pixel (u, v), -1 for background.
int visible_surface(const Scene& scene, double u, double v);

}  // namespace adu::synth
