#include "adu/synth/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "adu/error.hpp"
#include "adu/synth/io.hpp"

namespace adu::synth {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::vector<ManifestEntry> Manifest::split(const std::string& name) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.split == name) out.push_back(e);
  }
  return out;
}

fs::path Manifest::sample_dir(const ManifestEntry& e) const {
  return (root / e.left).parent_path();
}

std::uint64_t scene_seed(std::uint64_t master_seed, bool test_split, std::size_t index) {
  if (index >= (std::uint64_t{1} << 31)) throw ConfigError("sample index out of range");
  return (master_seed << 32) + (test_split ? (std::uint64_t{1} << 31) : 0) + index;
}

namespace {

std::string sample_id(const std::string& split, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%05zu", split.c_str(), i);
  return buf;
}

ordered_json rig_json(const CameraRig& rig) {
  return {{"focal_px", rig.focal_px},
          {"baseline_m", rig.baseline_m},
          {"width", rig.width},
          {"height", rig.height}};
}

}  // namespace

Manifest build_dataset(std::size_t n_train, std::size_t n_test, std::uint64_t seed,
                       const fs::path& out_dir, bool overwrite, const GenConfig& config) {
  if (n_train == 0 || n_test == 0) throw ConfigError("n_train and n_test must be positive");
  config.validate();
  if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
    if (!overwrite) {
      throw ConfigError("output directory " + out_dir.string() +
                        " is not empty (pass overwrite to replace it)");
    }
    for (const auto& entry : fs::directory_iterator(out_dir)) fs::remove_all(entry.path());
  }
  fs::create_directories(out_dir);

  Manifest manifest;
  manifest.root = out_dir;
  std::string lines;
  for (const bool test : {false, true}) {
    const std::string split = test ? "test" : "train";
    const std::size_t n = test ? n_test : n_train;
    for (std::size_t i = 0; i < n; ++i) {
      const std::string id = sample_id(split, i);
      const Scene scene = generate_scene(scene_seed(seed, test, i), config);
      const StereoSample sample = render_pair(scene, config.rig, id);
      const fs::path rel = fs::path(split) / id;
      write_sample(sample, out_dir / rel);

      ManifestEntry e{id,
                      split,
                      (rel / "left.ppm").generic_string(),
                      (rel / "right.ppm").generic_string(),
                      (rel / "depth.pfm").generic_string(),
                      (rel / "meta.json").generic_string(),
                      config.rig};
      ordered_json line{{"id", e.id},     {"split", e.split}, {"left", e.left},
                        {"right", e.right}, {"depth", e.depth}, {"meta", e.meta},
                        {"rig", rig_json(e.rig)}};
      lines += line.dump() + "\n";
      manifest.entries.push_back(std::move(e));
    }
  }
  write_file(out_dir / "manifest.jsonl", Bytes(lines.begin(), lines.end()));
  return manifest;
}

Manifest read_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot open manifest " + manifest_path.string());
  Manifest m;
  m.root = manifest_path.parent_path();
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      e.split = j.at("split").get<std::string>();
      e.left = j.at("left").get<std::string>();
      e.right = j.at("right").get<std::string>();
      e.depth = j.at("depth").get<std::string>();
      e.meta = j.at("meta").get<std::string>();
      const auto& rig = j.at("rig");
      e.rig.focal_px = rig.at("focal_px").get<double>();
      e.rig.baseline_m = rig.at("baseline_m").get<double>();
      e.rig.width = rig.at("width").get<std::size_t>();
      e.rig.height = rig.at("height").get<std::size_t>();
      m.entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError(std::string("manifest: ") + ex.what(), line_start);
    }
  }
  return m;
}

}  // namespace adu::synth
