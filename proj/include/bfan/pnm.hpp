#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "bfan/image.hpp"

// Binary portable anymap codec: P5 graymaps and P6 pixmaps, 8-bit, maxval
// 255. Canonical headers are "P5\n<w> <h>\n255\n", so encode(decode(x))
// round-trips byte-exactly for files this codec wrote.

namespace bfan {
namespace pnm {

namespace detail_pnm {

inline void fail(const std::string& what, size_t offset) {
  throw IoError("pnm: " + what + " at byte offset " + std::to_string(offset));
}

// whitespace/comment-aware token scanner over the header
struct Scanner {
  const std::vector<std::uint8_t>& bytes;
  size_t pos = 0;

  void skip_space_and_comments() {
    while (pos < bytes.size()) {
      const char c = static_cast<char>(bytes[pos]);
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos;
      } else {
        break;
      }
    }
  }

  int next_int(const char* what) {
    skip_space_and_comments();
    if (pos >= bytes.size()) fail(std::string("truncated header, missing ") + what, pos);
    if (bytes[pos] < '0' || bytes[pos] > '9')
      fail(std::string("expected digit for ") + what, pos);
    long long v = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1'000'000'000LL) fail(std::string("value too large for ") + what, pos);
      ++pos;
    }
    return static_cast<int>(v);
  }
};

struct Header {
  char magic;  // '5' or '6'
  int width, height, maxval;
  size_t payload_offset;
};

inline Header parse_header(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') fail("bad magic, expected P5 or P6", 0);
  const char kind = static_cast<char>(bytes[1]);
  if (kind != '5' && kind != '6') fail("bad magic, expected P5 or P6", 1);
  Scanner sc{bytes, 2};
  Header h;
  h.magic = kind;
  h.width = sc.next_int("width");
  h.height = sc.next_int("height");
  h.maxval = sc.next_int("maxval");
  if (h.width < 1 || h.height < 1) fail("degenerate dimensions", sc.pos);
  if (h.maxval != 255) fail("unsupported maxval " + std::to_string(h.maxval), sc.pos);
  // exactly one whitespace byte separates the header from the payload
  if (sc.pos >= bytes.size()) fail("truncated header before payload", sc.pos);
  const char sep = static_cast<char>(bytes[sc.pos]);
  if (sep != ' ' && sep != '\t' && sep != '\r' && sep != '\n')
    fail("missing whitespace before payload", sc.pos);
  h.payload_offset = sc.pos + 1;
  return h;
}

}  // namespace detail_pnm

inline GrayImage decode_p5(const std::vector<std::uint8_t>& bytes) {
  const auto h = detail_pnm::parse_header(bytes);
  if (h.magic != '5') detail_pnm::fail("expected a P5 graymap", 1);
  const size_t need = static_cast<size_t>(h.width) * h.height;
  if (bytes.size() - h.payload_offset < need)
    detail_pnm::fail("truncated payload, need " + std::to_string(need) + " bytes",
                     bytes.size());
  GrayImage img(h.height, h.width);
  std::copy(bytes.begin() + static_cast<long>(h.payload_offset),
            bytes.begin() + static_cast<long>(h.payload_offset + need), img.px.begin());
  return img;
}

inline RgbImage decode_p6(const std::vector<std::uint8_t>& bytes) {
  const auto h = detail_pnm::parse_header(bytes);
  if (h.magic != '6') detail_pnm::fail("expected a P6 pixmap", 1);
  const size_t need = static_cast<size_t>(h.width) * h.height * 3;
  if (bytes.size() - h.payload_offset < need)
    detail_pnm::fail("truncated payload, need " + std::to_string(need) + " bytes",
                     bytes.size());
  RgbImage img(h.height, h.width);
  std::copy(bytes.begin() + static_cast<long>(h.payload_offset),
            bytes.begin() + static_cast<long>(h.payload_offset + need), img.px.begin());
  return img;
}

inline std::vector<std::uint8_t> encode_p5(const GrayImage& img) {
  const std::string header =
      "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.px.begin(), img.px.end());
  return out;
}

inline std::vector<std::uint8_t> encode_p6(const RgbImage& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.px.begin(), img.px.end());
  return out;
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("pnm: cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f),
                                   std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("pnm: cannot create '" + path.string() + "'");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("pnm: short write to '" + path.string() + "'");
}

inline GrayImage load_gray(const std::filesystem::path& path) { return decode_p5(read_file(path)); }
inline RgbImage load_rgb(const std::filesystem::path& path) { return decode_p6(read_file(path)); }
inline void save_gray(const std::filesystem::path& path, const GrayImage& img) {
  write_file(path, encode_p5(img));
}
inline void save_rgb(const std::filesystem::path& path, const RgbImage& img) {
  write_file(path, encode_p6(img));
}

// Binary masks travel as 0/255 graymaps.
inline GrayImage mask_to_gray(const GrayImage& mask) {
  GrayImage g(mask.height, mask.width);
  for (size_t i = 0; i < mask.px.size(); ++i) g.px[i] = mask.px[i] ? 255 : 0;
  return g;
}

inline GrayImage gray_to_mask(const GrayImage& g) {
  GrayImage m(g.height, g.width);
  for (size_t i = 0; i < g.px.size(); ++i) m.px[i] = g.px[i] >= 128 ? 1 : 0;
  return m;
}

}  // namespace pnm
}  // namespace bfan
