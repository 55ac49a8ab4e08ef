#include "adu/train/data.hpp"

#include <random>

#include "adu/core/ops.hpp"
#include "adu/error.hpp"
#include "adu/synth/io.hpp"

namespace adu::train {

Tensor image_to_tensor(const synth::Image& image) {
  const std::size_t h = image.height, w = image.width;
  std::vector<double> v(3 * h * w);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) v[(c * h + y) * w + x] = image.at(x, y, c);
  return Tensor::from_data({1, 3, h, w}, std::move(v));
}

Tensor map_to_tensor(const synth::Map2D& map) {
  return Tensor::from_data({1, 1, map.height, map.width}, map.values);
}

synth::Map2D tensor_to_map(const Tensor& t) {
  if (t.rank() != 4 || t.dim(1) != 1) throw ShapeError("tensor_to_map: expected N x 1 x H x W");
  synth::Map2D m(t.dim(3), t.dim(2));
  auto d = t.data();
  std::copy(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(m.values.size()), m.values.begin());
  return m;
}

SplitData load_split(const synth::Manifest& manifest, const std::string& split) {
  SplitData out;
  std::string missing;
  for (const auto& e : manifest.split(split)) {
    for (const auto* rel : {&e.left, &e.right, &e.depth}) {
      if (!std::filesystem::exists(manifest.root / *rel)) missing += " " + *rel;
    }
  }
  if (!missing.empty()) throw ConfigError("missing sample files:" + missing);
  for (const auto& e : manifest.split(split)) {
    out.ids.push_back(e.id);
    out.left.push_back(image_to_tensor(synth::read_ppm(manifest.root / e.left)));
    out.right.push_back(image_to_tensor(synth::read_ppm(manifest.root / e.right)));
    out.depth.push_back(map_to_tensor(synth::read_pfm(manifest.root / e.depth)));
  }
  if (out.size() == 0) throw ConfigError("split '" + split + "' is empty");
  return out;
}

Batch make_batch(const SplitData& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ContractError("make_batch: empty batch");
  std::vector<Tensor> l, r, d;
  for (std::size_t i : indices) {
    if (i >= data.size()) throw ContractError("make_batch: index out of range");
    l.push_back(data.left[i]);
    r.push_back(data.right[i]);
    d.push_back(data.depth[i]);
  }
  if (indices.size() == 1) return {l[0], r[0], d[0]};
  return {concat_batch(l), concat_batch(r), concat_batch(d)};
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + epoch + 1);
  // Modulo draw instead of uniform_int_distribution: the latter's output is
  // not pinned by the standard.
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
  return idx;
}

}  // namespace adu::train
