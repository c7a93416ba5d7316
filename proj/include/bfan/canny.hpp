#pragma once

#include <cmath>
#include <deque>
#include <vector>

#include "bfan/image.hpp"

// Boundary label generation: Canny on binary saliency masks (Gaussian
// smoothing, Sobel gradients, 4-direction non-maximum suppression,
// hysteresis), plus the morphological-gradient oracle used to test it.

namespace bfan {

namespace detail_canny {

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

// separable Gaussian blur with replicate border padding
inline std::vector<double> gaussian_blur(const GrayImage& img, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  double ksum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    ksum += kernel[static_cast<size_t>(i + radius)];
  }
  for (double& k : kernel) k /= ksum;

  const int h = img.height, w = img.width;
  std::vector<double> tmp(static_cast<size_t>(h) * w), out(static_cast<size_t>(h) * w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i)
        s += kernel[static_cast<size_t>(i + radius)] *
             static_cast<double>(img.at(r, clampi(c + i, 0, w - 1)));
      tmp[static_cast<size_t>(r) * w + c] = s;
    }
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i)
        s += kernel[static_cast<size_t>(i + radius)] * tmp[static_cast<size_t>(clampi(r + i, 0, h - 1)) * w + c];
      out[static_cast<size_t>(r) * w + c] = s;
    }
  return out;
}

}  // namespace detail_canny

// mask AND NOT(3x3 erosion of mask); pixels outside the image count as 0.
inline GrayImage morph_boundary_oracle(const GrayImage& mask) {
  require_binary(mask, "morph_boundary_oracle");
  const int h = mask.height, w = mask.width;
  GrayImage out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (!mask.at(r, c)) continue;
      bool eroded = true;
      for (int dr = -1; dr <= 1 && eroded; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= h || cc < 0 || cc >= w || !mask.at(rr, cc)) {
            eroded = false;
            break;
          }
        }
      if (!eroded) out.at(r, c) = 1;
    }
  return out;
}

inline GrayImage dilate3(const GrayImage& mask) {
  const int h = mask.height, w = mask.width;
  GrayImage out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (!mask.at(r, c)) continue;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr >= 0 && rr < h && cc >= 0 && cc < w) out.at(rr, cc) = 1;
        }
    }
  return out;
}

// low/high are thresholds on the unit-normalized gradient magnitude.
inline GrayImage canny_boundary(const GrayImage& mask, double sigma = 1.0, double low = 0.1,
                                double high = 0.3) {
  require_binary(mask, "canny_boundary");
  if (sigma <= 0.0) throw ContractViolation("canny_boundary: sigma must be positive");
  if (!(0.0 < low && low < high && high <= 1.0))
    throw ContractViolation("canny_boundary: thresholds must satisfy 0 < low < high <= 1");

  const int h = mask.height, w = mask.width;
  const std::vector<double> smooth = detail_canny::gaussian_blur(mask, sigma);

  // Sobel with replicate padding
  std::vector<double> gx(static_cast<size_t>(h) * w), gy(static_cast<size_t>(h) * w),
      mag(static_cast<size_t>(h) * w);
  auto at = [&](int r, int c) {
    return smooth[static_cast<size_t>(detail_canny::clampi(r, 0, h - 1)) * w +
                  detail_canny::clampi(c, 0, w - 1)];
  };
  double max_mag = 0.0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double sx = (at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1)) -
                        (at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1));
      const double sy = (at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1)) -
                        (at(r - 1, c - 1) + 2.0 * at(r - 1, c) + at(r - 1, c + 1));
      const size_t i = static_cast<size_t>(r) * w + c;
      gx[i] = sx;
      gy[i] = sy;
      mag[i] = std::hypot(sx, sy);
      max_mag = std::max(max_mag, mag[i]);
    }
  GrayImage out(h, w);
  if (max_mag <= 1e-12) return out;  // constant image, no edges

  // non-maximum suppression along the gradient direction, quantized to
  // {0, 45, 90, 135} degrees; ties keep the pixel
  const double lo_t = low * max_mag, hi_t = high * max_mag;
  std::vector<std::uint8_t> state(static_cast<size_t>(h) * w, 0);  // 1 weak, 2 strong
  auto mag_at = [&](int r, int c) -> double {
    if (r < 0 || r >= h || c < 0 || c >= w) return 0.0;
    return mag[static_cast<size_t>(r) * w + c];
  };
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const size_t i = static_cast<size_t>(r) * w + c;
      if (mag[i] < lo_t) continue;
      double angle = std::atan2(gy[i], gx[i]) * 180.0 / 3.141592653589793;
      if (angle < 0.0) angle += 180.0;
      int dr, dc;
      if (angle < 22.5 || angle >= 157.5) {
        dr = 0; dc = 1;          // horizontal gradient, compare left/right
      } else if (angle < 67.5) {
        dr = 1; dc = 1;          // diagonal
      } else if (angle < 112.5) {
        dr = 1; dc = 0;          // vertical gradient, compare up/down
      } else {
        dr = 1; dc = -1;         // anti-diagonal
      }
      if (mag[i] >= mag_at(r + dr, c + dc) && mag[i] >= mag_at(r - dr, c - dc))
        state[i] = mag[i] >= hi_t ? 2 : 1;
    }

  // hysteresis: 8-connected flood from strong pixels through weak ones
  std::deque<size_t> frontier;
  for (size_t i = 0; i < state.size(); ++i)
    if (state[i] == 2) {
      out.px[i] = 1;
      frontier.push_back(i);
    }
  while (!frontier.empty()) {
    const size_t i = frontier.front();
    frontier.pop_front();
    const int r = static_cast<int>(i) / w, c = static_cast<int>(i) % w;
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        const int rr = r + dr, cc = c + dc;
        if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
        const size_t j = static_cast<size_t>(rr) * w + cc;
        if (state[j] == 1 && !out.px[j]) {
          out.px[j] = 1;
          frontier.push_back(j);
        }
      }
  }
  return out;
}

}  // namespace bfan
