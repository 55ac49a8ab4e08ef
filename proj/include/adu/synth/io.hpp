#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "adu/synth/scene.hpp"

namespace adu::synth {

using Bytes = std::vector<std::uint8_t>;

// Binary PPM (P6, maxval 255).
Bytes encode_ppm(const Image& image);
Image decode_ppm(std::span<const std::uint8_t> bytes);

// Grayscale PFM ("Pf"), written little-endian (scale -1.0) with rows
// bottom-up. Both byte orders are accepted on read.
Bytes encode_pfm(const Map2D& map);
Map2D decode_pfm(std::span<const std::uint8_t> bytes);

Bytes read_file(const std::filesystem::path& path);
/// Writes via a temporary file and rename.
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);
void write_pfm(const std::filesystem::path& path, const Map2D& map);
Map2D read_pfm(const std::filesystem::path& path);

/// dir/{left.ppm, right.ppm, depth.pfm, meta.json}
void write_sample(const StereoSample& sample, const std::filesystem::path& dir);
/// Parses every file before returning; no partial sample on failure.
StereoSample read_sample(const std::filesystem::path& dir);

}  // namespace adu::synth
