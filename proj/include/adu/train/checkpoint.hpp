#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>

#include <json.hpp>

#include "adu/core/params.hpp"
#include "adu/synth/io.hpp"

// Layout: "ADUCKPT1", u64 LE header length, JSON header
// {role, step, config, params: [{name, shape}...]}, then float32 LE values
// of every parameter in header order. Values are stored in single precision.

namespace adu::train {

inline constexpr char kCheckpointMagic[] = "ADUCKPT1";

struct Checkpoint {
  ModelParams params;
  nlohmann::ordered_json config;
  std::uint64_t step = 0;
};

synth::Bytes encode_checkpoint(const ModelParams& params, const nlohmann::ordered_json& config,
                               std::uint64_t step);
/// Throws ParseError on a bad magic, malformed header, or a payload whose
/// length differs from the header's declared element count.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const nlohmann::ordered_json& config, std::uint64_t step);
/// With `expected` set, a different role tag throws ConfigError.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<Role> expected = std::nullopt);

/// Throws ConfigError unless `loaded` carries exactly the names and shapes of
/// `reference`, in order.
void check_layout(const ModelParams& loaded, const ModelParams& reference);

}  // namespace adu::train
