#pragma once

#include <string>
#include <vector>

#include "bfan/layers.hpp"

namespace bfan {

// Attention-based feature fusion: globally pooled saliency and boundary
// activations are concatenated into one vector, softmax-normalized into
// channel weights (one joint distribution over all 2n channels), split back,
// and applied as channel-wise products before the element-wise merge.
// Parameter-free.
inline Tensor affm_fuse(const Tensor& f_red, const Tensor& b_tau) {
  if (f_red.shape() != b_tau.shape())
    throw ContractViolation("affm_fuse: saliency features " + shape_str(f_red.shape()) +
                            " and boundary features " + shape_str(b_tau.shape()) +
                            " must match");
  const int n = f_red.dim(1);
  const Tensor pooled = concat({global_avg_pool(f_red), global_avg_pool(b_tau)}, 1);  // [N,2n]
  const Tensor w = softmax(pooled);
  const Tensor w_f = slice(w, 1, 0, n);
  const Tensor w_b = slice(w, 1, n, 2 * n);
  return add(channel_scale(f_red, w_f), channel_scale(b_tau, w_b));
}

// Fused prediction module: 3x3 conv to one channel, then nearest upsampling
// back to input resolution.
struct Fpm {
  Conv2dLayer conv;
  int factor = 2;

  static Fpm create(int in_c, int tau, Rng& rng) {
    Fpm f;
    f.conv = Conv2dLayer::create(in_c, 1, 3, 1, 1, rng);
    f.factor = 1 << tau;
    return f;
  }

  Tensor forward(const Tensor& fused) const {
    return upsample_nearest(conv.forward(fused), factor);
  }

  void collect(const std::string& prefix, std::vector<NamedParam>& out) const {
    conv.collect(prefix, out);
  }
};

}  // namespace bfan
