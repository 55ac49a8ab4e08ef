#include "adu/train/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "adu/error.hpp"

namespace adu::train {

namespace {

constexpr std::size_t kMagicLen = 8;
constexpr std::size_t kPrefixLen = kMagicLen + 8;

void put_u64(synth::Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_f32(synth::Bytes& out, float f) {
  const auto u = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
}

float get_f32(const std::uint8_t* p) {
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(u);
}

}  // namespace

synth::Bytes encode_checkpoint(const ModelParams& params, const nlohmann::ordered_json& config,
                               std::uint64_t step) {
  nlohmann::ordered_json header;
  header["role"] = std::string(role_name(params.role()));
  header["step"] = step;
  header["config"] = config;
  auto table = nlohmann::ordered_json::array();
  for (const auto& [name, t] : params) {
    table.push_back({{"name", name}, {"shape", t.shape()}});
  }
  header["params"] = std::move(table);
  const std::string text = header.dump();

  synth::Bytes out(kCheckpointMagic, kCheckpointMagic + kMagicLen);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + 4 * params.total_numel());
  for (const auto& [name, t] : params) {
    for (double v : t.data()) put_f32(out, static_cast<float>(v));
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagicLen || std::memcmp(bytes.data(), kCheckpointMagic, kMagicLen) != 0) {
    throw ParseError("checkpoint: bad magic", 0);
  }
  if (bytes.size() < kPrefixLen) throw ParseError("checkpoint: truncated header length", bytes.size());
  const std::uint64_t header_len = get_u64(bytes.data() + kMagicLen);
  if (header_len > bytes.size() - kPrefixLen) {
    throw ParseError("checkpoint: header length exceeds file size", kMagicLen);
  }

  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(bytes.begin() + kPrefixLen,
                                           bytes.begin() + kPrefixLen + header_len);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint: malformed header: ") + e.what(), kPrefixLen + e.byte);
  }

  Checkpoint ck;
  std::vector<std::pair<std::string, Shape>> table;
  try {
    ck.params.set_role(parse_role(header.at("role").get<std::string>()));
    ck.step = header.at("step").get<std::uint64_t>();
    ck.config = header.at("config");
    for (const auto& e : header.at("params")) {
      Shape shape = e.at("shape").get<Shape>();
      if (shape.empty()) throw ConfigError("empty shape");
      for (auto d : shape) {
        if (d == 0) throw ConfigError("zero extent");
      }
      table.emplace_back(e.at("name").get<std::string>(), std::move(shape));
    }
  } catch (const std::exception& e) {
    throw ParseError(std::string("checkpoint: invalid header: ") + e.what(), kPrefixLen);
  }

  std::uint64_t count = 0;
  for (const auto& [name, shape] : table) count += shape_numel(shape);
  const std::size_t payload_at = kPrefixLen + header_len;
  const std::uint64_t payload = bytes.size() - payload_at;
  if (payload < 4 * count) {
    throw ParseError("checkpoint: truncated payload, header declares " + std::to_string(count) +
                         " values",
                     bytes.size());
  }
  if (payload > 4 * count) {
    throw ParseError("checkpoint: trailing bytes after payload", payload_at + 4 * count);
  }

  const std::uint8_t* p = bytes.data() + payload_at;
  for (auto& [name, shape] : table) {
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) {
      const float f = get_f32(p);
      if (!std::isfinite(f)) {
        throw ParseError("checkpoint: non-finite value in " + name,
                         static_cast<std::size_t>(p - bytes.data()));
      }
      v = f;
      p += 4;
    }
    try {
      ck.params.add(name, Tensor::from_data(shape, std::move(values), true));
    } catch (const ContractError& e) {
      throw ParseError(std::string("checkpoint: ") + e.what(), kPrefixLen);
    }
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const nlohmann::ordered_json& config, std::uint64_t step) {
  synth::write_file(path, encode_checkpoint(params, config, step));
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<Role> expected) {
  Checkpoint ck = decode_checkpoint(synth::read_file(path));
  if (expected && ck.params.role() != *expected) {
    throw ConfigError("checkpoint " + path.string() + " has role " +
                      std::string(role_name(ck.params.role())) + ", expected " +
                      std::string(role_name(*expected)));
  }
  return ck;
}

void check_layout(const ModelParams& loaded, const ModelParams& reference) {
  if (loaded.size() != reference.size()) {
    throw ConfigError("checkpoint has " + std::to_string(loaded.size()) + " tensors, expected " +
                      std::to_string(reference.size()));
  }
  auto a = loaded.begin();
  for (auto b = reference.begin(); b != reference.end(); ++a, ++b) {
    if (a->name != b->name || a->tensor.shape() != b->tensor.shape()) {
      throw ConfigError("checkpoint layout mismatch: " + a->name + " " +
                        shape_str(a->tensor.shape()) + " vs " + b->name + " " +
                        shape_str(b->tensor.shape()));
    }
  }
}

}  // namespace adu::train
