#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "adu/core/tensor.hpp"
#include "adu/synth/dataset.hpp"
#include "adu/synth/scene.hpp"

namespace adu::train {

/// 1 x 3 x H x W planar copy of an interleaved image.
Tensor image_to_tensor(const synth::Image& image);
/// 1 x 1 x H x W.
Tensor map_to_tensor(const synth::Map2D& map);
/// First image of an N x 1 x H x W tensor.
synth::Map2D tensor_to_map(const Tensor& t);

/// One manifest split held in memory, in manifest order.
struct SplitData {
  std::vector<std::string> ids;
  std::vector<Tensor> left, right, depth;
  std::size_t size() const { return ids.size(); }
};

/// Throws ConfigError listing every sample whose files are missing.
SplitData load_split(const synth::Manifest& manifest, const std::string& split);

struct Batch {
  Tensor left, right, depth;
};

Batch make_batch(const SplitData& data, std::span<const std::size_t> indices);

/// Fisher-Yates permutation of 0..n-1 fixed by (seed, epoch).
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

}  // namespace adu::train
