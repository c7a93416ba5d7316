#pragma once

#include <string>
#include <vector>

#include "bfan/backbone.hpp"

namespace bfan {

// Boundary prediction network: per-scale residual convolution units, stride-2
// deconvolutions carrying coarse boundary features upward, and 1x1 logit
// heads at every scale.

// Residual convolution unit: x + conv(relu(conv(relu(x)))), channels
// preserved. passthrough drops the residual body (the RCU-free ablation).
struct RcuBlock {
  Conv2dLayer conv1, conv2;
  bool passthrough = false;

  static RcuBlock create(int channels, bool passthrough, Rng& rng) {
    RcuBlock r;
    r.passthrough = passthrough;
    if (!passthrough) {
      r.conv1 = Conv2dLayer::create(channels, channels, 3, 1, 1, rng);
      r.conv2 = Conv2dLayer::create(channels, channels, 3, 1, 1, rng);
    }
    return r;
  }

  Tensor forward(const Tensor& x) const {
    if (passthrough) return x;
    return add(x, conv2.forward(relu(conv1.forward(relu(x)))));
  }

  void collect(const std::string& prefix, std::vector<NamedParam>& out) const {
    if (passthrough) return;
    conv1.collect(prefix + ".conv1", out);
    conv2.collect(prefix + ".conv2", out);
  }
};

struct BoundaryOutputs {
  std::vector<Tensor> features;  // B^tau, tau = 1..5 at index 0..4
  std::vector<Tensor> logits;    // B_p^tau, single channel, same dims
  Tensor full_res;               // boundary feature stack at input resolution
};

struct Bpn {
  std::vector<std::vector<RcuBlock>> rcus;  // [scale][cascade index]
  std::vector<Deconv2dLayer> ups;           // scale tau+1 -> tau, tau = 1..4
  std::vector<Conv2dLayer> heads;           // per-scale 1x1 logit head
  Deconv2dLayer to_full;                    // B^1 -> input resolution

  static Bpn create(const RunConfig& cfg, Rng& rng) {
    Bpn b;
    const int ch = cfg.boundary_channels;
    const bool passthrough = cfg.ablation == Ablation::BoundaryMinus;
    for (int t = 0; t < RunConfig::kScales; ++t) {
      std::vector<RcuBlock> cascade;
      for (int i = 0; i < cfg.rcu_per_scale; ++i)
        cascade.push_back(RcuBlock::create(ch, passthrough, rng));
      b.rcus.push_back(std::move(cascade));
    }
    for (int t = 0; t < RunConfig::kScales - 1; ++t)
      b.ups.push_back(Deconv2dLayer::create(ch, ch, 2, rng));
    for (int t = 0; t < RunConfig::kScales; ++t)
      b.heads.push_back(Conv2dLayer::create(ch, 1, 1, 1, 0, rng));
    b.to_full = Deconv2dLayer::create(ch, ch, 2, rng);
    return b;
  }

  Tensor refine(const Tensor& bf, int scale_idx) const {
    Tensor x = bf;
    for (const auto& r : rcus[static_cast<size_t>(scale_idx)]) x = r.forward(x);
    return x;
  }

  // B^5 = RCU(B_f^5); B^tau = deconv(B^{tau+1}) + RCU(B_f^tau) for tau < 5.
  BoundaryOutputs forward(const FeaturePyramid& bf) const {
    if (bf.size() != RunConfig::kScales)
      throw ContractViolation("bpn_forward: expected 5 boundary feature scales, got " +
                              std::to_string(bf.size()));
    BoundaryOutputs out;
    out.features.resize(RunConfig::kScales);
    out.features[RunConfig::kScales - 1] = refine(bf.back(), RunConfig::kScales - 1);
    for (int t = RunConfig::kScales - 2; t >= 0; --t) {
      const Tensor up = ups[static_cast<size_t>(t)].forward(out.features[static_cast<size_t>(t + 1)]);
      out.features[static_cast<size_t>(t)] = add(up, refine(bf[static_cast<size_t>(t)], t));
    }
    for (int t = 0; t < RunConfig::kScales; ++t)
      out.logits.push_back(heads[static_cast<size_t>(t)].forward(out.features[static_cast<size_t>(t)]));
    out.full_res = to_full.forward(out.features[0]);
    return out;
  }

  void collect(std::vector<NamedParam>& out) const {
    for (size_t t = 0; t < rcus.size(); ++t)
      for (size_t i = 0; i < rcus[t].size(); ++i)
        rcus[t][i].collect("bpn.rcu" + std::to_string(t + 1) + "_" + std::to_string(i + 1), out);
    for (size_t t = 0; t < ups.size(); ++t)
      ups[t].collect("bpn.up" + std::to_string(t + 1), out);
    for (size_t t = 0; t < heads.size(); ++t)
      heads[t].collect("bpn.head" + std::to_string(t + 1), out);
    to_full.collect("bpn.to_full", out);
  }
};

}  // namespace bfan
