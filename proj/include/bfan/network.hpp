#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "bfan/affm.hpp"
#include "bfan/bpn.hpp"
#include "bfan/rfc.hpp"

namespace bfan {

// Full-resolution stage-wise logit maps plus the merged final logit map.
struct PredictionSet {
  std::map<int, Tensor> stages;  // keyed by scale tau
  Tensor final_map;
};

// The whole network. Ablation wiring:
//   Baseline       - no boundary stream; stage maps come from F^tau directly
//   Boundary-/+    - boundary stream fused by concat + 1x1 conv (- drops RCUs)
//   AffmPlus       - boundary stream fused by attention weights
// All four variants emit a PredictionSet of identical shapes.
class BfanNet {
 public:
  explicit BfanNet(const RunConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg_.rng_seed);
    senc_ = SaliencyEncoder::create(cfg_, rng);
    rfc_ = RfcAggregator::create(cfg_, rng);
    bidir_ = BidirectionalRefine::create(cfg_, rng);
    const bool boundary_stream = cfg_.ablation != Ablation::Baseline;
    if (boundary_stream) {
      benc_ = BoundaryEncoder::create(cfg_, rng);
      bpn_ = Bpn::create(cfg_, rng);
      for (int t = 1; t <= RunConfig::kScales; ++t)
        reduce_.push_back(
            Conv2dLayer::create(cfg_.agg_channels, cfg_.boundary_channels, 1, 1, 0, rng));
      if (cfg_.ablation == Ablation::BoundaryMinus || cfg_.ablation == Ablation::BoundaryPlus)
        for (int t = 1; t <= RunConfig::kScales; ++t)
          concat_fuse_.push_back(Conv2dLayer::create(2 * cfg_.boundary_channels,
                                                     cfg_.boundary_channels, 1, 1, 0, rng));
    }
    const int stage_c = boundary_stream ? cfg_.boundary_channels : cfg_.agg_channels;
    for (int t = 1; t <= RunConfig::kScales; ++t) fpm_.push_back(Fpm::create(stage_c, t, rng));
    merge_ = Conv2dLayer::create(static_cast<int>(cfg_.fpm_subset.size()), 1, 1, 1, 0, rng);
  }

  struct Output {
    PredictionSet preds;
    BoundaryOutputs boundary;        // empty tensors for Baseline
    std::vector<Tensor> aggregated;  // refined F^tau
  };

  Output forward(const Tensor& images) const {
    if (images.ndim() != 4 || images.dim(1) != 3)
      throw ContractViolation("bfan_net: input must be [N,3,H,W], got " +
                              shape_str(images.shape()));
    if (images.dim(2) != cfg_.input_h || images.dim(3) != cfg_.input_w)
      throw ContractViolation("bfan_net: input " + shape_str(images.shape()) +
                              " does not match configured size " + std::to_string(cfg_.input_h) +
                              "x" + std::to_string(cfg_.input_w));
    Output out;
    const FeaturePyramid fm = senc_.forward(images);
    out.aggregated = bidir_.forward(rfc_.aggregate_all(fm));

    const bool boundary_stream = cfg_.ablation != Ablation::Baseline;
    if (boundary_stream) out.boundary = bpn_.forward(benc_.forward(images));

    for (int tau : cfg_.fpm_subset) {
      Tensor stage_in = out.aggregated[static_cast<size_t>(tau - 1)];
      if (boundary_stream) {
        const Tensor f_red = reduce_[static_cast<size_t>(tau - 1)].forward(stage_in);
        Tensor b_tau = out.boundary.full_res;
        for (int i = 0; i < tau; ++i) b_tau = avgpool2(b_tau);
        if (cfg_.ablation == Ablation::AffmPlus) {
          stage_in = affm_fuse(f_red, b_tau);
        } else {
          stage_in = concat_fuse_[static_cast<size_t>(tau - 1)].forward(concat({f_red, b_tau}, 1));
        }
      }
      out.preds.stages[tau] = fpm_[static_cast<size_t>(tau - 1)].forward(stage_in);
    }
    std::vector<Tensor> stage_maps;
    for (int tau : cfg_.fpm_subset) stage_maps.push_back(out.preds.stages.at(tau));
    out.preds.final_map = merge_.forward(concat(stage_maps, 1));
    return out;
  }

  // Evaluation-time subset study: re-merge an existing prediction set using
  // only the given stages, applying the matching slice of the trained merge
  // kernel plus its bias. Inference only; not part of the training graph.
  Tensor merge_subset(const PredictionSet& preds, const std::set<int>& subset) const {
    if (subset.empty()) throw ContractViolation("final_merge: stage subset must be non-empty");
    std::vector<Tensor> maps;
    std::vector<double> weights;
    int idx = 0;
    for (int tau : cfg_.fpm_subset) {
      if (subset.count(tau)) {
        auto it = preds.stages.find(tau);
        if (it == preds.stages.end())
          throw ContractViolation("final_merge: stage " + std::to_string(tau) +
                                  " not present in the prediction set");
        maps.push_back(it->second);
        weights.push_back(merge_.kernel.data()[idx]);
      }
      ++idx;
    }
    if (maps.empty())
      throw ContractViolation("final_merge: requested subset disjoint from configured stages");
    Tensor kernel = Tensor::from_data({1, static_cast<int>(maps.size()), 1, 1}, weights);
    Tensor bias = Tensor::from_data({1}, {merge_.bias.data()[0]});
    return conv2d(concat(maps, 1), kernel, bias, 1, 0);
  }

  std::vector<NamedParam> parameters() const {
    std::vector<NamedParam> out;
    senc_.collect(out);
    rfc_.collect(out);
    bidir_.collect(out);
    if (cfg_.ablation != Ablation::Baseline) {
      benc_.collect(out);
      bpn_.collect(out);
      for (size_t t = 0; t < reduce_.size(); ++t)
        reduce_[t].collect("fuse.reduce" + std::to_string(t + 1), out);
      for (size_t t = 0; t < concat_fuse_.size(); ++t)
        concat_fuse_[t].collect("fuse.concat" + std::to_string(t + 1), out);
    }
    for (size_t t = 0; t < fpm_.size(); ++t)
      fpm_[t].collect("fpm" + std::to_string(t + 1), out);
    merge_.collect("merge", out);
    return out;
  }

  const RunConfig& config() const { return cfg_; }

 private:
  RunConfig cfg_;
  SaliencyEncoder senc_;
  BoundaryEncoder benc_;
  RfcAggregator rfc_;
  BidirectionalRefine bidir_;
  Bpn bpn_;
  std::vector<Conv2dLayer> reduce_;
  std::vector<Conv2dLayer> concat_fuse_;
  std::vector<Fpm> fpm_;
  Conv2dLayer merge_;
};

}  // namespace bfan
