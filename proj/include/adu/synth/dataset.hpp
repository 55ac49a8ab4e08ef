#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adu/synth/scene.hpp"

namespace adu::synth {

struct ManifestEntry {
  std::string id;
  std::string split;  // "train" | "test"
  std::string left;   // paths relative to the dataset root
  std::string right;
  std::string depth;
  std::string meta;
  CameraRig rig;
};

struct Manifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;

  std::vector<ManifestEntry> split(const std::string& name) const;
  std::filesystem::path sample_dir(const ManifestEntry& e) const;
};

/// Scene seed for sample `index` of a split. Train and test draw from
/// disjoint halves of the 2^32-wide block owned by `master_seed`.
std::uint64_t scene_seed(std::uint64_t master_seed, bool test_split, std::size_t index);

/// Generates samples into out_dir/{train,test}/<id>/ plus out_dir/manifest.jsonl.
/// Refuses a non-empty out_dir unless `overwrite` is set.
Manifest build_dataset(std::size_t n_train, std::size_t n_test, std::uint64_t seed,
                       const std::filesystem::path& out_dir, bool overwrite = false,
                       const GenConfig& config = {});

/// Reads a JSON-lines manifest; `root` becomes the manifest's directory.
Manifest read_manifest(const std::filesystem::path& manifest_path);

}  // namespace adu::synth
