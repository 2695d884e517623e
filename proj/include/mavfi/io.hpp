// SPDX-License-Identifier: Apache-2.0
//
// On-disk formats: 8-bit RGB images (PNG, binary PPM/PGM), Middlebury .flo
// flow files, and the checkpoint container (plain-text manifest followed by
// little-endian array payloads). All writers go through a temporary file and
// an atomic rename.
#pragma once

#include <png.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mavfi/config.hpp"
#include "mavfi/core_ops.hpp"

namespace mavfi::io {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes bytes to a sibling temp file, then renames over `path`.
inline void atomic_write(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  thread_local std::mt19937_64 salt{std::random_device{}()};
  fs::path tmp = path;
  tmp += ".tmp" + std::to_string(salt() % 1000000007ull);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw FormatError("short write to " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// images

inline std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

namespace detail {

inline Frame<float> decode_png(const std::string& bytes, const std::string& where) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw FormatError(where + ": " + img.message);
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw FormatError(where + ": " + msg);
  }
  const int W = static_cast<int>(img.width), H = static_cast<int>(img.height);
  Frame<float> f(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c)
        f.tensor().at(c, y, x) = buf[(static_cast<std::size_t>(y) * W + x) * 3 + c] / 255.0f;
  return f;
}

/// Binary P5 (grey, promoted to RGB) or P6 with maxval 255.
inline Frame<float> decode_pnm(const std::string& bytes, const std::string& where) {
  std::size_t pos = 2;
  auto next_int = [&]() -> long {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    long v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + (bytes[pos++] - '0');
      any = true;
      if (v > 1 << 20) throw FormatError(where + ": header value out of range");
    }
    if (!any) throw FormatError(where + ": malformed PNM header");
    return v;
  };
  const bool grey = bytes[1] == '5';
  const long W = next_int(), H = next_int(), maxval = next_int();
  if (W <= 0 || H <= 0) throw FormatError(where + ": empty image");
  if (maxval != 255) throw FormatError(where + ": only 8-bit PNM (maxval 255) is supported");
  ++pos;  // single whitespace after maxval
  const std::size_t ch = grey ? 1 : 3;
  const std::size_t need = static_cast<std::size_t>(W) * H * ch;
  if (bytes.size() < pos + need) throw FormatError(where + ": truncated pixel data");
  Frame<float> f(static_cast<int>(H), static_cast<int>(W));
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        const std::size_t src = pos + (static_cast<std::size_t>(y) * W + x) * ch + (grey ? 0 : c);
        f.tensor().at(c, static_cast<int>(y), static_cast<int>(x)) = static_cast<unsigned char>(bytes[src]) / 255.0f;
      }
  return f;
}

}  // namespace detail

/// Loads an 8-bit image as a [0,1] RGB frame. Grey images become three equal channels.
inline Frame<float> read_image(const fs::path& path) {
  const std::string bytes = read_file(path);
  const std::string where = path.string();
  if (bytes.size() >= 8 && png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) == 0)
    return detail::decode_png(bytes, where);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) return detail::decode_pnm(bytes, where);
  throw FormatError(where + ": not a PNG or binary PPM/PGM image");
}

/// Writes PNG unless the extension is .ppm.
template <class T>
void write_image(const Frame<T>& frame, const fs::path& path) {
  const int W = frame.width(), H = frame.height();
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(W) * H * 3);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c)
        rgb[(static_cast<std::size_t>(y) * W + x) * 3 + c] = quantize(static_cast<double>(frame.tensor().at(c, y, x)));
  if (path.extension() == ".ppm") {
    std::string out = "P6\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
    out.append(reinterpret_cast<const char*>(rgb.data()), rgb.size());
    atomic_write(path, out);
    return;
  }
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(W);
  img.height = static_cast<png_uint_32>(H);
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, rgb.data(), 0, nullptr))
    throw FormatError(path.string() + ": " + img.message);
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, rgb.data(), 0, nullptr))
    throw FormatError(path.string() + ": " + img.message);
  out.resize(size);
  atomic_write(path, out);
}

// ---------------------------------------------------------------------------
// .flo

/// Sanity tag of the Middlebury flow format ("PIEH" read as a little-endian float).
inline constexpr float kFloTag = 202021.25f;

inline std::string encode_flo(const FlowField<float>& flow) {
  const std::int32_t W = flow.width(), H = flow.height();
  std::string out(12 + 8 * static_cast<std::size_t>(W) * H, '\0');
  std::memcpy(out.data(), &kFloTag, 4);
  std::memcpy(out.data() + 4, &W, 4);
  std::memcpy(out.data() + 8, &H, 4);
  char* p = out.data() + 12;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const float uv[2] = {flow.u(y, x), flow.v(y, x)};
      std::memcpy(p, uv, 8);
      p += 8;
    }
  return out;
}

inline FlowField<float> decode_flo(const std::string& bytes, const std::string& where) {
  if (bytes.size() < 12) throw FormatError(where + ": not a flow file (too short)");
  float tag;
  std::int32_t W, H;
  std::memcpy(&tag, bytes.data(), 4);
  std::memcpy(&W, bytes.data() + 4, 4);
  std::memcpy(&H, bytes.data() + 8, 4);
  if (tag != kFloTag) throw FormatError(where + ": not a flow file (bad sanity tag)");
  if (W <= 0 || H <= 0 || W > (1 << 16) || H > (1 << 16))
    throw FormatError(where + ": corrupt flow file (dimensions " + std::to_string(W) + "x" + std::to_string(H) + ")");
  const std::size_t want = 12 + 8 * static_cast<std::size_t>(W) * H;
  if (bytes.size() != want)
    throw FormatError(where + ": corrupt flow file (" + std::to_string(bytes.size()) + " bytes, expected " +
                      std::to_string(want) + ")");
  FlowField<float> f(H, W);
  const char* p = bytes.data() + 12;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      std::memcpy(&f.tensor().at(0, y, x), p, 4);
      std::memcpy(&f.tensor().at(1, y, x), p + 4, 4);
      p += 8;
    }
  return f;
}

inline FlowField<float> read_flo(const fs::path& path) { return decode_flo(read_file(path), path.string()); }
inline void write_flo(const FlowField<float>& flow, const fs::path& path) { atomic_write(path, encode_flo(flow)); }

// ---------------------------------------------------------------------------
// checkpoint container

inline constexpr int kCheckpointVersion = 1;

template <class T>
constexpr const char* dtype_name() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? "f32" : "f64";
}

template <class T>
struct Checkpoint {
  int version = kCheckpointVersion;
  std::string fingerprint;
  std::int64_t step = 0;
  Json model_config = Json::object();
  std::vector<std::pair<std::string, Tensor<T>>> arrays;

  const Tensor<T>* find(const std::string& name) const {
    for (const auto& [n, t] : arrays)
      if (n == name) return &t;
    return nullptr;
  }
};

/// Manifest lines:
///   MAVFI-CHECKPOINT / version / fingerprint / step / dtype / model <json> /
///   arrays <n> / one "<name> <rank> <dims...>" per array / payload <bytes>
/// followed by the raw little-endian array data in manifest order.
template <class T>
std::string encode_checkpoint(const Checkpoint<T>& ck) {
  std::ostringstream m;
  m << "MAVFI-CHECKPOINT\n"
    << "version " << ck.version << "\n"
    << "fingerprint " << ck.fingerprint << "\n"
    << "step " << ck.step << "\n"
    << "dtype " << dtype_name<T>() << "\n"
    << "model " << ck.model_config.dump() << "\n"
    << "arrays " << ck.arrays.size() << "\n";
  std::size_t payload = 0;
  for (const auto& [name, t] : ck.arrays) {
    expect(!name.empty() && name.find_first_of(" \n") == std::string::npos, "checkpoint array name '", name,
           "' must be non-empty without spaces");
    m << name << " " << t.rank();
    for (int d : t.shape()) m << " " << d;
    m << "\n";
    payload += t.size() * sizeof(T);
  }
  m << "payload " << payload << "\n";
  std::string out = m.str();
  for (const auto& [name, t] : ck.arrays) out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(T));
  return out;
}

template <class T>
Checkpoint<T> decode_checkpoint(const std::string& bytes, const std::string& where) {
  std::size_t pos = 0;
  auto line = [&]() {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw FormatError(where + ": corrupt checkpoint manifest (unterminated line)");
    std::string l = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return l;
  };
  auto field = [&](const std::string& key) {
    const std::string l = line();
    if (l.rfind(key + " ", 0) != 0) throw FormatError(where + ": corrupt checkpoint manifest (expected '" + key + "')");
    return l.substr(key.size() + 1);
  };
  if (line() != "MAVFI-CHECKPOINT") throw FormatError(where + ": not a checkpoint file");
  Checkpoint<T> ck;
  try {
    ck.version = std::stoi(field("version"));
    if (ck.version != kCheckpointVersion)
      throw FormatError(where + ": unsupported checkpoint version " + std::to_string(ck.version) + " (expected " +
                        std::to_string(kCheckpointVersion) + ")");
    ck.fingerprint = field("fingerprint");
    ck.step = std::stoll(field("step"));
    const std::string dtype = field("dtype");
    if (dtype != dtype_name<T>())
      throw FormatError(where + ": checkpoint holds " + dtype + " arrays, expected " + dtype_name<T>());
    ck.model_config = Json::parse(field("model"));
    const std::size_t n = std::stoul(field("arrays"));
    std::vector<std::pair<std::string, Shape>> specs;
    std::size_t total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::istringstream ls(line());
      std::string name;
      int rank = -1;
      ls >> name >> rank;
      if (!ls || rank < 0 || rank > 8) throw FormatError(where + ": corrupt checkpoint manifest (array entry)");
      Shape s(static_cast<std::size_t>(rank));
      for (auto& d : s) {
        ls >> d;
        if (!ls || d < 0) throw FormatError(where + ": corrupt checkpoint manifest (shape of " + name + ")");
      }
      total += shape_numel(s) * sizeof(T);
      specs.emplace_back(name, s);
    }
    const std::size_t payload = std::stoul(field("payload"));
    if (payload != total || bytes.size() - pos != payload)
      throw FormatError(where + ": corrupt checkpoint (payload is " + std::to_string(bytes.size() - pos) +
                        " bytes, manifest describes " + std::to_string(total) + ")");
    for (auto& [name, s] : specs) {
      Tensor<T> t(s);
      std::memcpy(t.data(), bytes.data() + pos, t.size() * sizeof(T));
      pos += t.size() * sizeof(T);
      ck.arrays.emplace_back(name, std::move(t));
    }
  } catch (const std::logic_error&) {
    throw FormatError(where + ": corrupt checkpoint manifest");
  } catch (const nlohmann::json::exception&) {
    throw FormatError(where + ": corrupt checkpoint manifest (model config)");
  }
  return ck;
}

template <class T>
void write_checkpoint(const Checkpoint<T>& ck, const fs::path& path) {
  atomic_write(path, encode_checkpoint(ck));
}

template <class T>
Checkpoint<T> read_checkpoint(const fs::path& path) {
  return decode_checkpoint<T>(read_file(path), path.string());
}

}  // namespace mavfi::io
