#pragma once

#include <string>
#include <vector>

#include "bfan/backbone.hpp"

namespace bfan {

// Resolution-based feature combination: every encoder level is reshaped to a
// common scale, concatenated channel-wise, and projected; a bidirectional
// pass then lets neighboring scales exchange information.

// Move a level-m feature map (stride 2^m) to scale tau (stride 2^tau):
// repeated 2x average-pooling to shrink, nearest upsampling to expand.
inline Tensor reshape_to_scale(const Tensor& f, int m, int tau) {
  if (m < 1 || tau < 1) throw ContractViolation("reshape_to_scale: levels are 1-based");
  if (m == tau) return f;
  Tensor x = f;
  if (m < tau) {
    for (int i = m; i < tau; ++i) x = avgpool2(x);
  } else {
    x = upsample_nearest(x, 1 << (m - tau));
  }
  return x;
}

struct RfcAggregator {
  std::vector<Conv2dLayer> proj;  // per-scale 1x1 onto agg_channels

  static RfcAggregator create(const RunConfig& cfg, Rng& rng) {
    RfcAggregator r;
    int concat_c = 0;
    for (int m = 1; m <= RunConfig::kLevels; ++m) concat_c += cfg.base_channels * m;
    for (int t = 1; t <= RunConfig::kScales; ++t)
      r.proj.push_back(Conv2dLayer::create(concat_c, cfg.agg_channels, 1, 1, 0, rng));
    return r;
  }

  // Fixed level order m=1..4; output spatial dims are (H/2^tau, W/2^tau).
  Tensor aggregate(const FeaturePyramid& pyramid, int tau) const {
    if (pyramid.size() != RunConfig::kLevels)
      throw ContractViolation("rfc_aggregate: expected 4 encoder levels, got " +
                              std::to_string(pyramid.size()));
    std::vector<Tensor> reshaped;
    reshaped.reserve(pyramid.size());
    for (int m = 1; m <= RunConfig::kLevels; ++m)
      reshaped.push_back(reshape_to_scale(pyramid[static_cast<size_t>(m - 1)], m, tau));
    // relu keeps the maps non-negative so the refinement's additive identity
    // holds with zero-initialized fusion convs
    return relu(proj[static_cast<size_t>(tau - 1)].forward(concat(reshaped, 1)));
  }

  std::vector<Tensor> aggregate_all(const FeaturePyramid& pyramid) const {
    std::vector<Tensor> f;
    for (int t = 1; t <= RunConfig::kScales; ++t) f.push_back(aggregate(pyramid, t));
    return f;
  }

  void collect(std::vector<NamedParam>& out) const {
    for (size_t t = 0; t < proj.size(); ++t)
      proj[t].collect("rfc.proj" + std::to_string(t + 1), out);
  }
};

// Top-down then bottom-up additive refinement across the five scales.
struct BidirectionalRefine {
  std::vector<Conv2dLayer> top_down;   // receives scale tau+1, tau = 1..4
  std::vector<Conv2dLayer> bottom_up;  // receives scale tau-1, tau = 2..5

  static BidirectionalRefine create(const RunConfig& cfg, Rng& rng) {
    BidirectionalRefine b;
    for (int i = 0; i < RunConfig::kScales - 1; ++i) {
      b.top_down.push_back(Conv2dLayer::create(cfg.agg_channels, cfg.agg_channels, 1, 1, 0, rng));
      b.bottom_up.push_back(Conv2dLayer::create(cfg.agg_channels, cfg.agg_channels, 1, 1, 0, rng));
    }
    return b;
  }

  std::vector<Tensor> forward(std::vector<Tensor> f) const {
    if (f.size() != RunConfig::kScales)
      throw ContractViolation("bidirectional_refine: expected 5 aggregated maps");
    for (int t = RunConfig::kScales - 1; t >= 1; --t) {  // tau = 4..1
      const Tensor up = upsample_nearest(f[static_cast<size_t>(t)], 2);
      f[static_cast<size_t>(t - 1)] = relu(
          add(f[static_cast<size_t>(t - 1)], top_down[static_cast<size_t>(t - 1)].forward(up)));
    }
    for (int t = 1; t < RunConfig::kScales; ++t) {  // tau = 2..5
      const Tensor down = avgpool2(f[static_cast<size_t>(t - 1)]);
      f[static_cast<size_t>(t)] = relu(
          add(f[static_cast<size_t>(t)], bottom_up[static_cast<size_t>(t - 1)].forward(down)));
    }
    return f;
  }

  void collect(std::vector<NamedParam>& out) const {
    for (size_t i = 0; i < top_down.size(); ++i)
      top_down[i].collect("rfc.td" + std::to_string(i + 1), out);
    for (size_t i = 0; i < bottom_up.size(); ++i)
      bottom_up[i].collect("rfc.bu" + std::to_string(i + 1), out);
  }
};

}  // namespace bfan
