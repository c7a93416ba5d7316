#pragma once

#include <string>
#include <vector>

#include "bfan/ops.hpp"
#include "bfan/optim.hpp"
#include "bfan/rng.hpp"

namespace bfan {

// "msra" init: zero-mean normal with stddev sqrt(2 / fan_in), biases zero.
inline void msra_fill(Tensor& kernel, int fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  double* p = kernel.data();
  for (long long i = 0; i < kernel.size(); ++i) p[i] = rng.normal(0.0, stddev);
}

struct Conv2dLayer {
  Tensor kernel;  // [outC, inC, k, k]
  Tensor bias;    // [outC]
  int stride = 1;
  int padding = 0;

  static Conv2dLayer create(int in_c, int out_c, int ksize, int stride, int padding, Rng& rng) {
    Conv2dLayer l;
    l.kernel = Tensor::zeros({out_c, in_c, ksize, ksize}, true);
    l.bias = Tensor::zeros({out_c}, true);
    l.stride = stride;
    l.padding = padding;
    msra_fill(l.kernel, in_c * ksize * ksize, rng);
    return l;
  }

  Tensor forward(const Tensor& x) const { return conv2d(x, kernel, bias, stride, padding); }

  void collect(const std::string& prefix, std::vector<NamedParam>& out) const {
    out.push_back({prefix + ".kernel", kernel});
    out.push_back({prefix + ".bias", bias});
  }
};

// Stride-s transposed convolution with kernel 2s and padding s/2 so the
// output is exactly s times the input; element-wise merges stay shape-exact.
struct Deconv2dLayer {
  Tensor kernel;  // [inC, outC, 2s, 2s]
  Tensor bias;    // [outC]
  int stride = 2;
  int padding = 1;

  static Deconv2dLayer create(int in_c, int out_c, int stride, Rng& rng) {
    if (stride < 2 || stride % 2 != 0)
      throw ContractViolation("deconv2d: stride must be a positive even factor, got " +
                              std::to_string(stride));
    Deconv2dLayer l;
    const int ksize = 2 * stride;
    l.stride = stride;
    l.padding = stride / 2;
    l.kernel = Tensor::zeros({in_c, out_c, ksize, ksize}, true);
    l.bias = Tensor::zeros({out_c}, true);
    msra_fill(l.kernel, in_c * ksize * ksize, rng);
    return l;
  }

  Tensor forward(const Tensor& x) const { return deconv2d(x, kernel, bias, stride, padding); }

  void collect(const std::string& prefix, std::vector<NamedParam>& out) const {
    out.push_back({prefix + ".kernel", kernel});
    out.push_back({prefix + ".bias", bias});
  }
};

}  // namespace bfan
