#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bfan/tensor.hpp"

namespace bfan {

struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> px;  // row-major

  GrayImage() = default;
  GrayImage(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), px(static_cast<size_t>(h) * w, fill) {}

  std::uint8_t& at(int r, int c) { return px[static_cast<size_t>(r) * width + c]; }
  std::uint8_t at(int r, int c) const { return px[static_cast<size_t>(r) * width + c]; }
  bool operator==(const GrayImage& o) const = default;
};

struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> px;  // interleaved r,g,b

  RgbImage() = default;
  RgbImage(int h, int w) : height(h), width(w), px(static_cast<size_t>(h) * w * 3, 0) {}

  std::uint8_t& at(int r, int c, int ch) {
    return px[(static_cast<size_t>(r) * width + c) * 3 + ch];
  }
  std::uint8_t at(int r, int c, int ch) const {
    return px[(static_cast<size_t>(r) * width + c) * 3 + ch];
  }
  bool operator==(const RgbImage& o) const = default;
};

// Binary masks hold strictly {0,1}.
inline void require_binary(const GrayImage& m, const char* who) {
  for (std::uint8_t v : m.px)
    if (v > 1)
      throw ContractViolation(std::string(who) + ": mask values must be 0 or 1, found " +
                              std::to_string(static_cast<int>(v)));
}

inline long long count_positive(const GrayImage& m) {
  long long n = 0;
  for (std::uint8_t v : m.px) n += (v != 0);
  return n;
}

}  // namespace bfan
