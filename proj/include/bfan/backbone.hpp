#pragma once

#include <string>
#include <vector>

#include "bfan/config.hpp"
#include "bfan/layers.hpp"

namespace bfan {

// Multi-scale feature stack; maps[i+1] halves the spatial dims of maps[i].
using FeaturePyramid = std::vector<Tensor>;

// Mean-subtracted pixels span roughly +-128; encoders rescale them to unit
// order once on entry so msra-initialized stacks train at ordinary rates.
constexpr double kPixelScale = 1.0 / 127.5;

// One encoder stage: two 3x3 convs with relu, then a 2x max-pool.
struct EncoderBlock {
  Conv2dLayer conv1, conv2;

  static EncoderBlock create(int in_c, int out_c, Rng& rng) {
    EncoderBlock b;
    b.conv1 = Conv2dLayer::create(in_c, out_c, 3, 1, 1, rng);
    b.conv2 = Conv2dLayer::create(out_c, out_c, 3, 1, 1, rng);
    return b;
  }

  Tensor forward(const Tensor& x) const {
    return maxpool2(relu(conv2.forward(relu(conv1.forward(x)))));
  }

  void collect(const std::string& prefix, std::vector<NamedParam>& out) const {
    conv1.collect(prefix + ".conv1", out);
    conv2.collect(prefix + ".conv2", out);
  }
};

// Saliency encoder: four stages, one tap per stride {2,4,8,16}; stage m has
// base_channels*m channels.
struct SaliencyEncoder {
  std::vector<EncoderBlock> blocks;

  static SaliencyEncoder create(const RunConfig& cfg, Rng& rng) {
    SaliencyEncoder e;
    int in_c = 3;
    for (int m = 1; m <= RunConfig::kLevels; ++m) {
      const int out_c = cfg.base_channels * m;
      e.blocks.push_back(EncoderBlock::create(in_c, out_c, rng));
      in_c = out_c;
    }
    return e;
  }

  FeaturePyramid forward(const Tensor& img) const {
    if (img.ndim() != 4 || img.dim(2) % 32 != 0 || img.dim(3) % 32 != 0)
      throw ContractViolation("saliency_encoder: input dims must be NCHW multiples of 32, got " +
                              shape_str(img.shape()));
    FeaturePyramid pyr;
    Tensor x = scale(img, kPixelScale);
    for (const auto& b : blocks) {
      x = b.forward(x);
      pyr.push_back(x);
    }
    return pyr;
  }

  void collect(std::vector<NamedParam>& out) const {
    for (size_t m = 0; m < blocks.size(); ++m)
      blocks[m].collect("senc.block" + std::to_string(m + 1), out);
  }
};

// Boundary encoder: five stages at strides 2..32, fixed channel width.
struct BoundaryEncoder {
  std::vector<EncoderBlock> blocks;

  static BoundaryEncoder create(const RunConfig& cfg, Rng& rng) {
    BoundaryEncoder e;
    int in_c = 3;
    for (int t = 1; t <= RunConfig::kScales; ++t) {
      e.blocks.push_back(EncoderBlock::create(in_c, cfg.boundary_channels, rng));
      in_c = cfg.boundary_channels;
    }
    return e;
  }

  FeaturePyramid forward(const Tensor& img) const {
    if (img.ndim() != 4 || img.dim(2) % 32 != 0 || img.dim(3) % 32 != 0)
      throw ContractViolation("boundary_encoder: input dims must be NCHW multiples of 32, got " +
                              shape_str(img.shape()));
    FeaturePyramid pyr;
    Tensor x = scale(img, kPixelScale);
    for (const auto& b : blocks) {
      x = b.forward(x);
      pyr.push_back(x);
    }
    return pyr;
  }

  void collect(std::vector<NamedParam>& out) const {
    for (size_t t = 0; t < blocks.size(); ++t)
      blocks[t].collect("benc.block" + std::to_string(t + 1), out);
  }
};

}  // namespace bfan
