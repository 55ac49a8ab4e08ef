#include "adu/synth/io.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "adu/error.hpp"

namespace adu::synth {

namespace {

// Cursor over a header made of whitespace-separated ASCII tokens.
class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::string token(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) ++pos_;
    if (start == pos_) throw ParseError(std::string("missing ") + what, start);
    return std::string(bytes_.begin() + static_cast<long>(start),
                       bytes_.begin() + static_cast<long>(pos_));
  }

  long integer(const char* what) {
    const std::size_t start = (skip_space_and_comments(), pos_);
    const std::string t = token(what);
    std::size_t used = 0;
    long v = 0;
    try {
      v = std::stol(t, &used);
    } catch (const std::exception&) {
      throw ParseError(std::string("malformed ") + what + " '" + t + "'", start);
    }
    if (used != t.size()) throw ParseError(std::string("malformed ") + what, start);
    return v;
  }

  double real(const char* what) {
    const std::size_t start = (skip_space_and_comments(), pos_);
    const std::string t = token(what);
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(t, &used);
    } catch (const std::exception&) {
      throw ParseError(std::string("malformed ") + what + " '" + t + "'", start);
    }
    if (used != t.size()) throw ParseError(std::string("malformed ") + what, start);
    return v;
  }

  // Exactly one whitespace byte separates the header from the payload.
  void end_of_header() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw ParseError("expected single whitespace before payload", pos_);
    }
    ++pos_;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::size_t positive_extent(long v, const char* what, std::size_t offset) {
  if (v <= 0) throw ParseError(std::string("non-positive ") + what, offset);
  return static_cast<std::size_t>(v);
}

void append(Bytes& out, const std::string& s) { out.insert(out.end(), s.begin(), s.end()); }

}  // namespace

Bytes encode_ppm(const Image& image) {
  if (image.width == 0 || image.height == 0) throw ShapeError("cannot encode empty image");
  Bytes out;
  append(out, "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n");
  out.reserve(out.size() + image.rgb.size());
  for (double v : image.rgb) {
    out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  }
  return out;
}

Image decode_ppm(std::span<const std::uint8_t> bytes) {
  HeaderReader r(bytes);
  if (r.token("magic") != "P6") throw ParseError("bad PPM magic (expected P6)", 0);
  std::size_t at = r.offset();
  const auto w = positive_extent(r.integer("width"), "width", at);
  at = r.offset();
  const auto h = positive_extent(r.integer("height"), "height", at);
  at = r.offset();
  const long maxval = r.integer("maxval");
  if (maxval <= 0 || maxval > 255) throw ParseError("unsupported PPM maxval", at);
  r.end_of_header();
  const std::size_t need = w * h * 3;
  if (bytes.size() - r.offset() < need) {
    throw ParseError("truncated PPM payload: need " + std::to_string(need) + " bytes, have " +
                         std::to_string(bytes.size() - r.offset()),
                     bytes.size());
  }
  if (bytes.size() - r.offset() > need) {
    throw ParseError("trailing bytes after PPM payload", r.offset() + need);
  }
  Image img(w, h);
  const double scale = static_cast<double>(maxval);
  for (std::size_t i = 0; i < need; ++i) img.rgb[i] = bytes[r.offset() + i] / scale;
  return img;
}

Bytes encode_pfm(const Map2D& map) {
  if (map.width == 0 || map.height == 0) throw ShapeError("cannot encode empty map");
  Bytes out;
  append(out, "Pf\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n-1.0\n");
  const std::size_t header = out.size();
  out.resize(header + map.width * map.height * 4);
  std::uint8_t* dst = out.data() + header;
  for (std::size_t row = 0; row < map.height; ++row) {
    const std::size_t y = map.height - 1 - row;
    for (std::size_t x = 0; x < map.width; ++x) {
      auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(map.at(x, y)));
      for (int b = 0; b < 4; ++b) *dst++ = static_cast<std::uint8_t>(bits >> (8 * b));
    }
  }
  return out;
}

Map2D decode_pfm(std::span<const std::uint8_t> bytes) {
  HeaderReader r(bytes);
  const std::string magic = r.token("magic");
  if (magic == "PF") throw ParseError("color PFM not supported (expected Pf)", 0);
  if (magic != "Pf") throw ParseError("bad PFM magic (expected Pf)", 0);
  std::size_t at = r.offset();
  const auto w = positive_extent(r.integer("width"), "width", at);
  at = r.offset();
  const auto h = positive_extent(r.integer("height"), "height", at);
  at = r.offset();
  const double scale = r.real("scale");
  if (scale == 0.0 || !std::isfinite(scale)) throw ParseError("invalid PFM scale", at);
  r.end_of_header();
  const bool little = scale < 0.0;
  const std::size_t need = w * h * 4;
  if (bytes.size() - r.offset() < need) {
    throw ParseError("truncated PFM payload: need " + std::to_string(need) + " bytes, have " +
                         std::to_string(bytes.size() - r.offset()),
                     bytes.size());
  }
  if (bytes.size() - r.offset() > need) {
    throw ParseError("trailing bytes after PFM payload", r.offset() + need);
  }
  Map2D map(w, h);
  const std::uint8_t* src = bytes.data() + r.offset();
  for (std::size_t row = 0; row < h; ++row) {
    const std::size_t y = h - 1 - row;
    for (std::size_t x = 0; x < w; ++x, src += 4) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        const int shift = little ? 8 * b : 8 * (3 - b);
        bits |= static_cast<std::uint32_t>(src[b]) << shift;
      }
      map.at(x, y) = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  return map;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<long>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  write_file(path, encode_ppm(image));
}

Image read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }

void write_pfm(const std::filesystem::path& path, const Map2D& map) {
  write_file(path, encode_pfm(map));
}

Map2D read_pfm(const std::filesystem::path& path) { return decode_pfm(read_file(path)); }

void write_sample(const StereoSample& sample, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_ppm(dir / "left.ppm", sample.left);
  write_ppm(dir / "right.ppm", sample.right);
  write_pfm(dir / "depth.pfm", sample.depth_gt);
  nlohmann::ordered_json meta{
      {"id", sample.id},
      {"rig",
       {{"focal_px", sample.rig.focal_px},
        {"baseline_m", sample.rig.baseline_m},
        {"width", sample.rig.width},
        {"height", sample.rig.height}}}};
  const std::string text = meta.dump(2) + "\n";
  write_file(dir / "meta.json", Bytes(text.begin(), text.end()));
}

StereoSample read_sample(const std::filesystem::path& dir) {
  StereoSample s;
  s.left = read_ppm(dir / "left.ppm");
  s.right = read_ppm(dir / "right.ppm");
  s.depth_gt = read_pfm(dir / "depth.pfm");
  const auto text = read_file(dir / "meta.json");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(text.begin(), text.end());
    s.id = meta.at("id").get<std::string>();
    const auto& rig = meta.at("rig");
    s.rig.focal_px = rig.at("focal_px").get<double>();
    s.rig.baseline_m = rig.at("baseline_m").get<double>();
    s.rig.width = rig.at("width").get<std::size_t>();
    s.rig.height = rig.at("height").get<std::size_t>();
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("meta.json: ") + e.what(), e.byte);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("meta.json: ") + e.what(), 0);
  }
  if (s.left.width != s.rig.width || s.left.height != s.rig.height ||
      s.right.width != s.rig.width || s.right.height != s.rig.height ||
      s.depth_gt.width != s.rig.width || s.depth_gt.height != s.rig.height) {
    throw ShapeError("sample files in " + dir.string() + " disagree with rig extents");
  }
  return s;
}

}  // namespace adu::synth
