#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ouro/grid.hpp"

namespace ouro {

// Video dump layout:
//   "OURO0001" | u32 LE header length | JSON header | f32 LE frames
// Header: {"dtype":"f32le","shape":[n,c,h,w],"config_hash":...,"seed":...};
// frames are stored in [frame, channel, row, col] order.
inline constexpr std::array<char, 8> kDumpMagic{'O', 'U', 'R', 'O', '0', '0', '0', '1'};

struct FormatError : Error {
  FormatError(std::string path, const std::string& what) : Error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

struct DumpHeader {
  long n_frames = 0;
  Shape frame{};
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string dtype = "f32le";
};

namespace detail {

inline void put_u32_le(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32_le(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32_le(std::vector<char>& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

inline float get_f32_le(const unsigned char* b) { return std::bit_cast<float>(get_u32_le(b)); }

inline std::string header_json(const DumpHeader& h) {
  nlohmann::json j{{"dtype", h.dtype},
                   {"shape", {h.n_frames, h.frame.c, h.frame.h, h.frame.w}},
                   {"config_hash", h.config_hash},
                   {"seed", h.seed}};
  return j.dump();
}

}  // namespace detail

// Streams frames to disk as they are emitted; the frame count is fixed up front.
class DumpWriter {
 public:
  DumpWriter(const std::string& path, DumpHeader header)
      : path_(path), header_(std::move(header)), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw FormatError(path_, "cannot open for writing");
    const std::string js = detail::header_json(header_);
    out_.write(kDumpMagic.data(), kDumpMagic.size());
    detail::put_u32_le(out_, static_cast<std::uint32_t>(js.size()));
    out_.write(js.data(), static_cast<std::streamsize>(js.size()));
  }

  void write(const Grid& frame) {
    if (frame.shape() != header_.frame) throw DimensionError("dump frame shape mismatch");
    if (written_ >= header_.n_frames) throw DimensionError("dump already holds every declared frame");
    buf_.clear();
    buf_.reserve(frame.size() * 4);
    for (double v : frame.values()) detail::put_f32_le(buf_, static_cast<float>(v));
    out_.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    ++written_;
  }

  void close() {
    if (written_ != header_.n_frames) {
      throw DimensionError("dump declares " + std::to_string(header_.n_frames) + " frames but " +
                           std::to_string(written_) + " were written");
    }
    out_.close();
    if (!out_) throw FormatError(path_, "write failed");
  }

 private:
  std::string path_;
  DumpHeader header_;
  std::ofstream out_;
  std::vector<char> buf_;
  long written_ = 0;
};

struct VideoDump {
  DumpHeader header;
  std::vector<Grid> frames;
};

inline DumpHeader parse_dump_header(const std::string& path, std::istream& in, std::uint32_t& header_bytes) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 8 || magic != kDumpMagic) throw FormatError(path, "missing OURO0001 magic");
  unsigned char len[4];
  in.read(reinterpret_cast<char*>(len), 4);
  if (in.gcount() != 4) throw FormatError(path, "truncated header length");
  header_bytes = detail::get_u32_le(len);
  std::string js(header_bytes, '\0');
  in.read(js.data(), header_bytes);
  if (static_cast<std::uint32_t>(in.gcount()) != header_bytes) throw FormatError(path, "truncated header");
  DumpHeader h;
  try {
    const auto j = nlohmann::json::parse(js);
    h.dtype = j.at("dtype").get<std::string>();
    const auto shape = j.at("shape").get<std::vector<long>>();
    if (shape.size() != 4) throw FormatError(path, "shape must have four entries");
    h.n_frames = shape[0];
    h.frame = Shape{static_cast<int>(shape[1]), static_cast<int>(shape[2]), static_cast<int>(shape[3])};
    h.config_hash = j.at("config_hash").get<std::string>();
    h.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path, std::string("bad header: ") + e.what());
  }
  if (h.dtype != "f32le") throw FormatError(path, "unsupported dtype " + h.dtype);
  return h;
}

inline VideoDump read_dump(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path, "cannot open");
  std::uint32_t header_bytes = 0;
  VideoDump dump;
  dump.header = parse_dump_header(path, in, header_bytes);
  const std::size_t per_frame = dump.header.frame.size() * 4;
  std::vector<unsigned char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (payload.size() != per_frame * static_cast<std::size_t>(dump.header.n_frames)) {
    throw FormatError(path, "payload of " + std::to_string(payload.size()) + " bytes does not match header shape");
  }
  for (long f = 0; f < dump.header.n_frames; ++f) {
    Grid g(dump.header.frame);
    const unsigned char* base = payload.data() + static_cast<std::size_t>(f) * per_frame;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = detail::get_f32_le(base + 4 * i);
    dump.frames.push_back(std::move(g));
  }
  return dump;
}

}  // namespace ouro
