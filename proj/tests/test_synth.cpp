#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "adu/error.hpp"
#include "adu/synth/dataset.hpp"
#include "adu/synth/io.hpp"
#include "test_util.hpp"

using namespace adu;
using namespace adu::synth;
namespace fs = std::filesystem;

namespace {

// Brute-force right-view visibility: for every surface, scan left columns u
// and keep those whose nearest-pixel projection round(u - f*B/Z) lands on j.
int oracle_right_surface(const Scene& scene, const CameraRig& rig, long j, long v,
                         double* left_u) {
  int best = -1;
  double best_z = std::numeric_limits<double>::infinity();
  const long n = static_cast<long>(scene.primitives.size());
  for (long s = -1; s < n; ++s) {
    const double z = s < 0 ? scene.background_depth_m : scene.primitives[s].depth_m;
    const double d = rig.focal_px * rig.baseline_m / z;
    for (long u = -200; u < static_cast<long>(rig.width) + 200; ++u) {
      if (static_cast<long>(std::floor(static_cast<double>(u) - d + 0.5)) != j) continue;
      const bool covered = s < 0 || scene.primitives[s].covers(u, v);
      if (covered && z < best_z) {
        best = static_cast<int>(s);
        best_z = z;
        *left_u = static_cast<double>(u);
      }
    }
  }
  return best;
}

Scene flat_scene(double depth) {
  Scene s;
  s.background_depth_m = depth;
  s.background_color = {0.6, 0.4, 0.5};
  s.background_freq_x = 0.4;
  s.background_freq_y = 0.1;
  s.background_phase = 0.3;
  return s;
}

}  // namespace

TEST(GenerateScene, DeterministicAndInRange) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Scene a = generate_scene(seed);
    EXPECT_EQ(a, generate_scene(seed));
    EXPECT_GE(a.primitives.size(), 3u);
    EXPECT_LE(a.primitives.size(), 8u);
    EXPECT_GE(a.background_depth_m, 40.0);
    EXPECT_LE(a.background_depth_m, 60.0);
    for (const auto& p : a.primitives) {
      EXPECT_GE(p.depth_m, 4.0);
      EXPECT_LE(p.depth_m, 30.0);
    }
  }
}

TEST(GenerateScene, DifferentSeedsDiffer) {
  int differ = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Scene a = generate_scene(seed);
    const Scene b = generate_scene(seed + 1000);
    bool same = a.primitives.size() == b.primitives.size();
    for (std::size_t i = 0; same && i < a.primitives.size(); ++i) {
      same = a.primitives[i].center_u == b.primitives[i].center_u &&
             a.primitives[i].center_v == b.primitives[i].center_v;
    }
    differ += same ? 0 : 1;
  }
  EXPECT_GE(differ, 95);
}

TEST(GenerateScene, ConfigErrors) {
  GenConfig c;
  c.z_min = 30.0;
  c.z_max = 30.0;
  EXPECT_THROW(generate_scene(1, c), ConfigError);
  GenConfig d;
  d.max_primitives = 9;
  EXPECT_THROW(generate_scene(1, d), ConfigError);
}

TEST(RenderPair, UnitDisparityShiftsOnePixel) {
  CameraRig rig;
  rig.focal_px = 100.0;
  rig.baseline_m = 0.5;
  EXPECT_DOUBLE_EQ(rig.disparity(50.0), 1.0);
  const auto s = render_pair(flat_scene(50.0), rig);
  for (std::size_t y = 0; y < rig.height; ++y) {
    for (std::size_t x = 0; x + 1 < rig.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) ASSERT_EQ(s.right.at(x, y, c), s.left.at(x + 1, y, c));
    }
  }
  for (double d : s.depth_gt.values) EXPECT_EQ(d, 50.0);
}

TEST(RenderPair, NearerHasLargerDisparity) {
  CameraRig rig;
  EXPECT_GT(rig.disparity(5.0), rig.disparity(20.0));
  EXPECT_GE(rig.pixel_shift(5.0), rig.pixel_shift(20.0));
}

TEST(RenderPair, DisocclusionMatchesRayOracle) {
  CameraRig rig;
  Scene scene = flat_scene(50.0);
  Primitive p;
  p.kind = PrimitiveKind::rectangle;
  p.depth_m = 5.0;
  p.center_u = 48.0;
  p.center_v = 32.0;
  p.half_w = 10.0;
  p.half_h = 8.0;
  p.color = {0.9, 0.2, 0.1};
  p.freq_x = 1.0;
  scene.primitives.push_back(p);
  const auto s = render_pair(scene, rig);

  for (long v = 0; v < static_cast<long>(rig.height); ++v) {
    for (long j = 0; j < static_cast<long>(rig.width); ++j) {
      double u = 0.0;
      const int surf = oracle_right_surface(scene, rig, j, v, &u);
      const auto col = surface_color(scene, surf, u, static_cast<double>(v), rig);
      for (std::size_t c = 0; c < 3; ++c) {
        ASSERT_EQ(s.right.at(static_cast<std::size_t>(j), static_cast<std::size_t>(v), c), col[c])
            << "j=" << j << " v=" << v;
      }
    }
  }

  // Right edge of the box: near surface on the left, disoccluded background on the right.
  const std::size_t x = 57, y = 32;
  EXPECT_EQ(s.depth_gt.at(x, y), 5.0);
  double u = 0.0;
  EXPECT_EQ(oracle_right_surface(scene, rig, static_cast<long>(x), static_cast<long>(y), &u), -1);
  const auto bg = surface_color(scene, -1, u, static_cast<double>(y), rig);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(s.right.at(x, y, c), bg[c]);
}

TEST(RenderPair, DisparityConsistencyAndDepthRange) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = render_pair(generate_scene(seed), CameraRig{});
    EXPECT_EQ(testutil::count_disparity_violations(s, generate_scene(seed)), 0u);
    for (double d : s.depth_gt.values) {
      EXPECT_GE(d, 4.0);
      EXPECT_LE(d, 60.0);
    }
  }
}

TEST(RenderPair, RejectsExcessiveDisparity) {
  CameraRig rig;
  rig.width = 10;
  Scene scene = flat_scene(50.0);
  Primitive p;
  p.depth_m = 4.0;  // 13.5 px disparity
  scene.primitives.push_back(p);
  EXPECT_THROW(render_pair(scene, rig), ConfigError);
}

TEST(Pfm, AcceptsExactPayload) {
  std::string header = "Pf\n3 2\n-1.0\n";
  Bytes bytes(header.begin(), header.end());
  const float vals[6] = {1, 2, 3, 4, 5, 6};
  bytes.resize(bytes.size() + 24);
  std::memcpy(bytes.data() + header.size(), vals, 24);
  const Map2D m = decode_pfm(bytes);
  EXPECT_EQ(m.width, 3u);
  EXPECT_EQ(m.height, 2u);
  // First stored row is the bottom row.
  EXPECT_EQ(m.at(0, 1), 1.0);
  EXPECT_EQ(m.at(2, 0), 6.0);
}

TEST(Pfm, RejectsMalformed) {
  std::string header = "Pf\n3 2\n-1.0\n";
  Bytes truncated(header.begin(), header.end());
  truncated.resize(truncated.size() + 23);
  EXPECT_THROW(decode_pfm(truncated), ParseError);

  std::string bad = "PX\n3 2\n-1.0\n";
  EXPECT_THROW(decode_pfm(Bytes(bad.begin(), bad.end())), ParseError);
  std::string zero = "Pf\n0 2\n-1.0\n";
  try {
    decode_pfm(Bytes(zero.begin(), zero.end()));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 2u);
  }
}

TEST(Ppm, RejectsMalformed) {
  std::string ok = "P6\n2 1\n255\n";
  Bytes b(ok.begin(), ok.end());
  b.resize(b.size() + 5);
  EXPECT_THROW(decode_ppm(b), ParseError);
  b.push_back(0);
  EXPECT_NO_THROW(decode_ppm(b));
  b.push_back(0);
  try {
    decode_ppm(b);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), b.size() - 1);
  }
  std::string magic = "P3\n2 1\n255\n";
  EXPECT_THROW(decode_ppm(Bytes(magic.begin(), magic.end())), ParseError);
}

TEST(SampleIo, RoundTrip) {
  testutil::TempDir tmp;
  const auto s = render_pair(generate_scene(3), CameraRig{}, "abc");
  write_sample(s, tmp.path() / "s");
  const auto r = read_sample(tmp.path() / "s");
  EXPECT_EQ(r.id, "abc");
  EXPECT_EQ(r.left, s.left);
  EXPECT_EQ(r.right, s.right);
  ASSERT_EQ(r.depth_gt.values.size(), s.depth_gt.values.size());
  for (std::size_t i = 0; i < s.depth_gt.values.size(); ++i) {
    EXPECT_LE(std::abs(r.depth_gt.values[i] - s.depth_gt.values[i]) / s.depth_gt.values[i], 1e-7);
  }
  // PPM bytes are reproduced exactly.
  EXPECT_EQ(encode_ppm(r.left), read_file(tmp.path() / "s" / "left.ppm"));
  EXPECT_EQ(encode_pfm(r.depth_gt), read_file(tmp.path() / "s" / "depth.pfm"));
}

TEST(SampleIo, TruncatedDepthFails) {
  testutil::TempDir tmp;
  const auto s = render_pair(generate_scene(4), CameraRig{}, "x");
  write_sample(s, tmp.path());
  auto bytes = read_file(tmp.path() / "depth.pfm");
  bytes.resize(bytes.size() - 1);
  write_file(tmp.path() / "depth.pfm", bytes);
  EXPECT_THROW(read_sample(tmp.path()), ParseError);
}

TEST(SampleIo, ExtendedDepthFails) {
  testutil::TempDir tmp;
  const auto s = render_pair(generate_scene(4), CameraRig{}, "x");
  write_sample(s, tmp.path());
  auto bytes = read_file(tmp.path() / "depth.pfm");
  bytes.push_back(0);
  write_file(tmp.path() / "depth.pfm", bytes);
  EXPECT_THROW(read_sample(tmp.path()), ParseError);
}

TEST(Dataset, ManifestAndDeterminism) {
  testutil::TempDir tmp;
  const auto m = build_dataset(8, 2, 11, tmp.path() / "a");
  EXPECT_EQ(m.entries.size(), 10u);
  EXPECT_EQ(m.split("train").size(), 8u);
  EXPECT_EQ(m.split("test").size(), 2u);

  const auto lines = testutil::read_lines(tmp.path() / "a" / "manifest.jsonl");
  EXPECT_EQ(lines.size(), 10u);

  std::set<std::string> train_ids, test_ids;
  for (const auto& e : m.split("train")) train_ids.insert(e.id);
  for (const auto& e : m.split("test")) test_ids.insert(e.id);
  for (const auto& id : test_ids) EXPECT_EQ(train_ids.count(id), 0u);
  EXPECT_NE(scene_seed(11, false, 0), scene_seed(11, true, 0));

  build_dataset(8, 2, 11, tmp.path() / "b");
  EXPECT_TRUE(testutil::trees_identical(tmp.path() / "a", tmp.path() / "b"));

  const auto r = read_manifest(tmp.path() / "a" / "manifest.jsonl");
  ASSERT_EQ(r.entries.size(), 10u);
  EXPECT_EQ(r.entries[9].split, "test");
  const auto sample = read_sample(r.sample_dir(r.entries[0]));
  EXPECT_EQ(sample.id, r.entries[0].id);
}

TEST(Dataset, RefusesNonEmptyDirectory) {
  testutil::TempDir tmp;
  build_dataset(1, 1, 0, tmp.path());
  EXPECT_THROW(build_dataset(1, 1, 0, tmp.path()), ConfigError);
  EXPECT_NO_THROW(build_dataset(2, 1, 0, tmp.path(), true));
  EXPECT_EQ(read_manifest(tmp.path() / "manifest.jsonl").entries.size(), 3u);
  EXPECT_THROW(build_dataset(0, 1, 0, tmp.path() / "z"), ConfigError);
}
