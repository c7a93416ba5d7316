#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bfan/gemm.hpp"
#include "bfan/tensor.hpp"

// Differentiable primitives. Each op validates its contract, computes the
// forward value, and records a backward closure that accumulates into the
// inputs' grad buffers. Convolutions run through im2col + the tiled GEMM.

namespace bfan {

namespace detail {

inline Tensor make_output(std::vector<int> shape, const char* op,
                          std::vector<std::shared_ptr<Node>> inputs) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value.assign(static_cast<size_t>(shape_numel(n->shape)), 0.0);
  n->op = op;
  for (const auto& in : inputs) n->requires_grad = n->requires_grad || in->requires_grad;
  n->inputs = std::move(inputs);
  n->seq = next_seq();
  return Tensor(std::move(n));
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractViolation(msg);
}

inline std::vector<double>& scratch_a() {
  thread_local std::vector<double> buf;
  return buf;
}
inline std::vector<double>& scratch_b() {
  thread_local std::vector<double> buf;
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and reduction ops

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " +
                                              shape_str(b.shape()));
  Tensor out = detail::make_output(a.shape(), "add", {a.shared_node(), b.shared_node()});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  const long long n = a.size();
  for (long long i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  check_finite("add", out.values());
  out.node_ptr()->backward_fn = [](detail::Node& self) {
    for (int k = 0; k < 2; ++k) {
      auto& in = *self.inputs[k];
      if (!in.requires_grad) continue;
      for (size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i];
    }
  };
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require(a.shape() == b.shape(), "mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                                              shape_str(b.shape()));
  Tensor out = detail::make_output(a.shape(), "mul", {a.shared_node(), b.shared_node()});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (long long i = 0; i < a.size(); ++i) po[i] = pa[i] * pb[i];
  check_finite("mul", out.values());
  out.node_ptr()->backward_fn = [](detail::Node& self) {
    auto& ia = *self.inputs[0];
    auto& ib = *self.inputs[1];
    for (size_t i = 0; i < self.grad.size(); ++i) {
      if (ia.requires_grad) ia.grad[i] += self.grad[i] * ib.value[i];
      if (ib.requires_grad) ib.grad[i] += self.grad[i] * ia.value[i];
    }
  };
  return out;
}

inline Tensor scale(const Tensor& a, double c) {
  Tensor out = detail::make_output(a.shape(), "scale", {a.shared_node()});
  const double* pa = a.data();
  double* po = out.data();
  for (long long i = 0; i < a.size(); ++i) po[i] = c * pa[i];
  check_finite("scale", out.values());
  out.node_ptr()->backward_fn = [c](detail::Node& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    for (size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += c * self.grad[i];
  };
  return out;
}

inline Tensor sum(const Tensor& a) {
  Tensor out = detail::make_output({1}, "sum", {a.shared_node()});
  double s = 0.0;
  const double* pa = a.data();
  for (long long i = 0; i < a.size(); ++i) s += pa[i];
  out.data()[0] = s;
  check_finite("sum", out.values());
  out.node_ptr()->backward_fn = [](detail::Node& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    const double g = self.grad[0];
    for (double& v : in.grad) v += g;
  };
  return out;
}

inline Tensor relu(const Tensor& a) {
  Tensor out = detail::make_output(a.shape(), "relu", {a.shared_node()});
  const double* pa = a.data();
  double* po = out.data();
  for (long long i = 0; i < a.size(); ++i) po[i] = pa[i] > 0.0 ? pa[i] : 0.0;
  out.node_ptr()->backward_fn = [](detail::Node& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (in.value[i] > 0.0) in.grad[i] += self.grad[i];
  };
  return out;
}

inline double sigmoid_scalar(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& a) {
  Tensor out = detail::make_output(a.shape(), "sigmoid", {a.shared_node()});
  const double* pa = a.data();
  double* po = out.data();
  for (long long i = 0; i < a.size(); ++i) po[i] = sigmoid_scalar(pa[i]);
  out.node_ptr()->backward_fn = [](detail::Node& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    for (size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.value[i];
      in.grad[i] += self.grad[i] * y * (1.0 - y);
    }
  };
  return out;
}

// ---------------------------------------------------------------------------
// Concatenation / slicing along an axis (channel axis 1 in practice)

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
  detail::require(!parts.empty(), "concat: needs at least one input");
  const auto& s0 = parts[0].shape();
  detail::require(axis >= 0 && axis < static_cast<int>(s0.size()), "concat: axis out of range");
  int axis_total = 0;
  for (const auto& p : parts) {
    detail::require(p.ndim() == static_cast<int>(s0.size()), "concat: rank mismatch");
    for (int d = 0; d < static_cast<int>(s0.size()); ++d)
      detail::require(d == axis || p.shape()[d] == s0[d],
                      "concat: shape mismatch outside the concat axis");
    axis_total += p.shape()[axis];
  }
  std::vector<int> out_shape = s0;
  out_shape[axis] = axis_total;

  long long outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s0[d];
  for (int d = axis + 1; d < static_cast<int>(s0.size()); ++d) inner *= s0[d];

  std::vector<std::shared_ptr<detail::Node>> ins;
  ins.reserve(parts.size());
  for (const auto& p : parts) ins.push_back(p.shared_node());
  Tensor out = detail::make_output(out_shape, "concat", std::move(ins));

  double* po = out.data();
  const long long out_block = static_cast<long long>(axis_total) * inner;
  long long offset = 0;
  for (const auto& p : parts) {
    const long long block = static_cast<long long>(p.shape()[axis]) * inner;
    const double* pp = p.data();
    for (long long o = 0; o < outer; ++o)
      std::copy(pp + o * block, pp + (o + 1) * block, po + o * out_block + offset);
    offset += block;
  }

  out.node_ptr()->backward_fn = [outer, out_block](detail::Node& self) {
    long long off = 0;
    for (auto& inp : self.inputs) {
      const long long block = static_cast<long long>(inp->value.size()) / outer;
      if (inp->requires_grad) {
        for (long long o = 0; o < outer; ++o) {
          const double* g = self.grad.data() + o * out_block + off;
          double* d = inp->grad.data() + o * block;
          for (long long i = 0; i < block; ++i) d[i] += g[i];
        }
      }
      off += block;
    }
  };
  return out;
}

inline Tensor slice(const Tensor& a, int axis, int start, int end) {
  const auto& s = a.shape();
  detail::require(axis >= 0 && axis < static_cast<int>(s.size()), "slice: axis out of range");
  detail::require(0 <= start && start < end && end <= s[axis],
                  "slice: range [" + std::to_string(start) + "," + std::to_string(end) +
                      ") invalid for axis extent " + std::to_string(s[axis]));
  long long outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s[d];
  for (int d = axis + 1; d < static_cast<int>(s.size()); ++d) inner *= s[d];

  std::vector<int> out_shape = s;
  out_shape[axis] = end - start;
  Tensor out = detail::make_output(out_shape, "slice", {a.shared_node()});

  const long long in_block = static_cast<long long>(s[axis]) * inner;
  const long long out_block = static_cast<long long>(end - start) * inner;
  const double* pa = a.data();
  double* po = out.data();
  for (long long o = 0; o < outer; ++o)
    std::copy(pa + o * in_block + start * inner, pa + o * in_block + end * inner,
              po + o * out_block);

  out.node_ptr()->backward_fn = [outer, inner, in_block, out_block, start](detail::Node& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    for (long long o = 0; o < outer; ++o) {
      const double* g = self.grad.data() + o * out_block;
      double* d = in.grad.data() + o * in_block + start * inner;
      for (long long i = 0; i < out_block; ++i) d[i] += g[i];
    }
  };
  return out;
}

// ---------------------------------------------------------------------------
// im2col / col2im

namespace detail {

inline void im2col(const double* im, int channels, int height, int width, int ksize, int stride,
                   int pad, double* col) {
  const int out_h = (height + 2 * pad - ksize) / stride + 1;
  const int out_w = (width + 2 * pad - ksize) / stride + 1;
  for (int c = 0; c < channels; ++c) {
    const double* src = im + static_cast<long long>(c) * height * width;
    for (int kh = 0; kh < ksize; ++kh) {
      for (int kw = 0; kw < ksize; ++kw) {
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * stride - pad + kh;
          double* dst = col;
          if (ih < 0 || ih >= height) {
            for (int ow = 0; ow < out_w; ++ow) dst[ow] = 0.0;
          } else {
            const double* row = src + static_cast<long long>(ih) * width;
            for (int ow = 0; ow < out_w; ++ow) {
              const int iw = ow * stride - pad + kw;
              dst[ow] = (iw >= 0 && iw < width) ? row[iw] : 0.0;
            }
          }
          col += out_w;
        }
      }
    }
  }
}

inline void col2im_add(const double* col, int channels, int height, int width, int ksize,
                       int stride, int pad, double* im) {
  const int out_h = (height + 2 * pad - ksize) / stride + 1;
  const int out_w = (width + 2 * pad - ksize) / stride + 1;
  for (int c = 0; c < channels; ++c) {
    double* dst = im + static_cast<long long>(c) * height * width;
    for (int kh = 0; kh < ksize; ++kh) {
      for (int kw = 0; kw < ksize; ++kw) {
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * stride - pad + kh;
          if (ih >= 0 && ih < height) {
            double* row = dst + static_cast<long long>(ih) * width;
            for (int ow = 0; ow < out_w; ++ow) {
              const int iw = ow * stride - pad + kw;
              if (iw >= 0 && iw < width) row[iw] += col[ow];
            }
          }
          col += out_w;
        }
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution (cross-correlation) and transposed convolution

// x [N,C,H,W], kernel [outC,C,k,k], bias [outC].
inline Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, int stride,
                     int padding) {
  detail::require(x.ndim() == 4, "conv2d: input must be NCHW, got " + shape_str(x.shape()));
  detail::require(kernel.ndim() == 4, "conv2d: kernel must be [outC,inC,kH,kW]");
  const int batch = x.dim(0), in_c = x.dim(1), height = x.dim(2), width = x.dim(3);
  const int out_c = kernel.dim(0), k_in = kernel.dim(1), ksize = kernel.dim(2);
  detail::require(kernel.dim(2) == kernel.dim(3), "conv2d: only square kernels supported");
  detail::require(k_in == in_c, "conv2d: input channels " + std::to_string(in_c) +
                                    " do not match kernel channels " + std::to_string(k_in));
  detail::require(bias.ndim() == 1 && bias.dim(0) == out_c,
                  "conv2d: bias must have one entry per output channel");
  detail::require(stride >= 1 && padding >= 0, "conv2d: stride must be >=1 and padding >=0");
  detail::require(height + 2 * padding >= ksize && width + 2 * padding >= ksize,
                  "conv2d: padded input smaller than kernel");
  const int out_h = (height + 2 * padding - ksize) / stride + 1;
  const int out_w = (width + 2 * padding - ksize) / stride + 1;

  Tensor out = detail::make_output({batch, out_c, out_h, out_w}, "conv2d",
                                   {x.shared_node(), kernel.shared_node(), bias.shared_node()});
  const long long ckk = static_cast<long long>(in_c) * ksize * ksize;
  const long long ohw = static_cast<long long>(out_h) * out_w;
  const long long in_plane = static_cast<long long>(in_c) * height * width;
  const long long out_plane = static_cast<long long>(out_c) * ohw;

  const bool pointwise = (ksize == 1 && stride == 1 && padding == 0);
  auto& col = detail::scratch_a();
  if (!pointwise) col.resize(static_cast<size_t>(ckk * ohw));

  for (int n = 0; n < batch; ++n) {
    const double* xin = x.data() + n * in_plane;
    const double* cptr = xin;
    if (!pointwise) {
      detail::im2col(xin, in_c, height, width, ksize, stride, padding, col.data());
      cptr = col.data();
    }
    matmul_nn(out_c, static_cast<int>(ohw), static_cast<int>(ckk), kernel.data(), cptr,
              out.data() + n * out_plane, false);
    double* oplane = out.data() + n * out_plane;
    for (int oc = 0; oc < out_c; ++oc) {
      const double b = bias.data()[oc];
      double* orow = oplane + oc * ohw;
      for (long long i = 0; i < ohw; ++i) orow[i] += b;
    }
  }
  check_finite("conv2d", out.values());

  out.node_ptr()->backward_fn = [stride, padding, batch, in_c, height, width, out_c, ksize, out_h,
                                 out_w, ckk, ohw, in_plane, out_plane,
                                 pointwise](detail::Node& self) {
    auto& xn = *self.inputs[0];
    auto& kn = *self.inputs[1];
    auto& bn = *self.inputs[2];
    auto& col = detail::scratch_a();
    auto& scr = detail::scratch_b();
    std::vector<double> wt;  // kernel transposed once for the data gradient
    if (xn.requires_grad) {
      wt.resize(static_cast<size_t>(ckk * out_c));
      transpose(out_c, static_cast<int>(ckk), kn.value.data(), wt.data());
    }
    if (!pointwise) col.resize(static_cast<size_t>(ckk * ohw));
    std::vector<double> dcol(xn.requires_grad && !pointwise ? static_cast<size_t>(ckk * ohw) : 0);

    for (int n = 0; n < batch; ++n) {
      const double* gout = self.grad.data() + n * out_plane;
      if (kn.requires_grad) {
        const double* cptr = xn.value.data() + n * in_plane;
        if (!pointwise) {
          detail::im2col(xn.value.data() + n * in_plane, in_c, height, width, ksize, stride,
                         padding, col.data());
          cptr = col.data();
        }
        // dW += dY * col^T
        matmul_nt(out_c, static_cast<int>(ckk), static_cast<int>(ohw), gout, cptr,
                  kn.grad.data(), true, scr);
      }
      if (bn.requires_grad) {
        for (int oc = 0; oc < out_c; ++oc) {
          double s = 0.0;
          const double* g = gout + oc * ohw;
          for (long long i = 0; i < ohw; ++i) s += g[i];
          bn.grad[oc] += s;
        }
      }
      if (xn.requires_grad) {
        if (pointwise) {
          matmul_nn(in_c, static_cast<int>(ohw), out_c, wt.data(), gout,
                    xn.grad.data() + n * in_plane, true);
        } else {
          matmul_nn(static_cast<int>(ckk), static_cast<int>(ohw), out_c, wt.data(), gout,
                    dcol.data(), false);
          detail::col2im_add(dcol.data(), in_c, height, width, ksize, stride, padding,
                             xn.grad.data() + n * in_plane);
        }
      }
    }
    (void)out_h;
    (void)out_w;
  };
  return out;
}

// Transposed convolution. x [N,C,H,W], kernel [C,outC,k,k], bias [outC].
// Output spatial dims are exactly stride*H x stride*W, which requires
// k - 2*padding == stride; anything else is rejected up front.
inline Tensor deconv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, int stride,
                       int padding) {
  detail::require(x.ndim() == 4, "deconv2d: input must be NCHW");
  detail::require(kernel.ndim() == 4 && kernel.dim(2) == kernel.dim(3),
                  "deconv2d: kernel must be [inC,outC,k,k]");
  const int batch = x.dim(0), in_c = x.dim(1), height = x.dim(2), width = x.dim(3);
  const int out_c = kernel.dim(1), ksize = kernel.dim(2);
  detail::require(kernel.dim(0) == in_c, "deconv2d: input channels " + std::to_string(in_c) +
                                             " do not match kernel channels " +
                                             std::to_string(kernel.dim(0)));
  detail::require(bias.ndim() == 1 && bias.dim(0) == out_c,
                  "deconv2d: bias must have one entry per output channel");
  detail::require(stride >= 1 && padding >= 0, "deconv2d: stride must be >=1 and padding >=0");
  detail::require(ksize - 2 * padding == stride,
                  "deconv2d: kernel " + std::to_string(ksize) + ", stride " +
                      std::to_string(stride) + ", padding " + std::to_string(padding) +
                      " does not produce an exact stride-times upsample");
  const int out_h = stride * height, out_w = stride * width;

  Tensor out = detail::make_output({batch, out_c, out_h, out_w}, "deconv2d",
                                   {x.shared_node(), kernel.shared_node(), bias.shared_node()});
  const long long okk = static_cast<long long>(out_c) * ksize * ksize;
  const long long hw = static_cast<long long>(height) * width;
  const long long in_plane = static_cast<long long>(in_c) * hw;
  const long long out_plane = static_cast<long long>(out_c) * out_h * out_w;

  auto& col = detail::scratch_a();
  auto& scr = detail::scratch_b();
  col.resize(static_cast<size_t>(okk * hw));
  for (int n = 0; n < batch; ++n) {
    // col = K^T [okk,inC] * x_n [inC,HW], then scatter with stride
    matmul_tn(static_cast<int>(okk), static_cast<int>(hw), in_c, kernel.data(),
              x.data() + n * in_plane, col.data(), false, scr);
    double* oplane = out.data() + n * out_plane;
    detail::col2im_add(col.data(), out_c, out_h, out_w, ksize, stride, padding, oplane);
    for (int oc = 0; oc < out_c; ++oc) {
      const double b = bias.data()[oc];
      double* orow = oplane + static_cast<long long>(oc) * out_h * out_w;
      for (long long i = 0; i < static_cast<long long>(out_h) * out_w; ++i) orow[i] += b;
    }
  }
  check_finite("deconv2d", out.values());

  out.node_ptr()->backward_fn = [stride, padding, batch, in_c, out_c, height, width, ksize, out_h,
                                 out_w, okk, hw, in_plane, out_plane](detail::Node& self) {
    auto& xn = *self.inputs[0];
    auto& kn = *self.inputs[1];
    auto& bn = *self.inputs[2];
    auto& col = detail::scratch_a();
    auto& scr = detail::scratch_b();
    col.resize(static_cast<size_t>(okk * hw));
    for (int n = 0; n < batch; ++n) {
      const double* gout = self.grad.data() + n * out_plane;
      // im2col over the output gradient mirrors the forward scatter
      detail::im2col(gout, out_c, out_h, out_w, ksize, stride, padding, col.data());
      if (xn.requires_grad)
        matmul_nn(in_c, static_cast<int>(hw), static_cast<int>(okk), kn.value.data(), col.data(),
                  xn.grad.data() + n * in_plane, true);
      if (kn.requires_grad)
        matmul_nt(in_c, static_cast<int>(okk), static_cast<int>(hw),
                  xn.value.data() + n * in_plane, col.data(), kn.grad.data(), true, scr);
      if (bn.requires_grad) {
        for (int oc = 0; oc < out_c; ++oc) {
          double s = 0.0;
          const double* g = gout + static_cast<long long>(oc) * out_h * out_w;
          for (long long i = 0; i < static_cast<long long>(out_h) * out_w; ++i) s += g[i];
          bn.grad[oc] += s;
        }
      }
    }
  };
  return out;
}

// ---------------------------------------------------------------------------
// Pooling, upsampling, global average pooling

inline Tensor maxpool2(const Tensor& x) {
  detail::require(x.ndim() == 4, "maxpool2: input must be NCHW");
  const int batch = x.dim(0), ch = x.dim(1), height = x.dim(2), width = x.dim(3);
  detail::require(height % 2 == 0 && width % 2 == 0,
                  "maxpool2: spatial dims must be even, got " + shape_str(x.shape()));
  const int oh = height / 2, ow = width / 2;
  Tensor out = detail::make_output({batch, ch, oh, ow}, "maxpool2", {x.shared_node()});

  // argmax offsets (0..3, row-major in the 2x2 window; ties pick the first)
  auto arg = std::make_shared<std::vector<std::uint8_t>>(out.values().size());
  const double* px = x.data();
  double* po = out.data();
  long long o = 0;
  for (long long nc = 0; nc < static_cast<long long>(batch) * ch; ++nc) {
    const double* plane = px + nc * height * width;
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j, ++o) {
        const double* w00 = plane + (2 * i) * width + 2 * j;
        double best = w00[0];
        std::uint8_t bi = 0;
        if (w00[1] > best) best = w00[1], bi = 1;
        if (w00[width] > best) best = w00[width], bi = 2;
        if (w00[width + 1] > best) best = w00[width + 1], bi = 3;
        po[o] = best;
        (*arg)[static_cast<size_t>(o)] = bi;
      }
    }
  }
  out.node_ptr()->backward_fn = [arg, batch, ch, height, width, oh, ow](detail::Node& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    long long o = 0;
    for (long long nc = 0; nc < static_cast<long long>(batch) * ch; ++nc) {
      double* gplane = in.grad.data() + nc * height * width;
      for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j, ++o) {
          const std::uint8_t bi = (*arg)[static_cast<size_t>(o)];
          const int di = bi >> 1, dj = bi & 1;
          gplane[(2 * i + di) * width + 2 * j + dj] += self.grad[static_cast<size_t>(o)];
        }
      }
    }
  };
  return out;
}

inline Tensor avgpool2(const Tensor& x) {
  detail::require(x.ndim() == 4, "avgpool2: input must be NCHW");
  const int batch = x.dim(0), ch = x.dim(1), height = x.dim(2), width = x.dim(3);
  detail::require(height % 2 == 0 && width % 2 == 0,
                  "avgpool2: spatial dims must be even, got " + shape_str(x.shape()));
  const int oh = height / 2, ow = width / 2;
  Tensor out = detail::make_output({batch, ch, oh, ow}, "avgpool2", {x.shared_node()});
  const double* px = x.data();
  double* po = out.data();
  long long o = 0;
  for (long long nc = 0; nc < static_cast<long long>(batch) * ch; ++nc) {
    const double* plane = px + nc * height * width;
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j, ++o) {
        const double* w00 = plane + (2 * i) * width + 2 * j;
        po[o] = 0.25 * (w00[0] + w00[1] + w00[width] + w00[width + 1]);
      }
  }
  check_finite("avgpool2", out.values());
  out.node_ptr()->backward_fn = [batch, ch, height, width, oh, ow](detail::Node& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    long long o = 0;
    for (long long nc = 0; nc < static_cast<long long>(batch) * ch; ++nc) {
      double* gplane = in.grad.data() + nc * height * width;
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j, ++o) {
          const double g = 0.25 * self.grad[static_cast<size_t>(o)];
          double* w00 = gplane + (2 * i) * width + 2 * j;
          w00[0] += g;
          w00[1] += g;
          w00[width] += g;
          w00[width + 1] += g;
        }
    }
  };
  return out;
}

inline Tensor upsample_nearest(const Tensor& x, int factor) {
  detail::require(x.ndim() == 4, "upsample_nearest: input must be NCHW");
  detail::require(factor >= 1, "upsample_nearest: factor must be >= 1");
  if (factor == 1) return scale(x, 1.0);  // keeps the graph uniform
  const int batch = x.dim(0), ch = x.dim(1), height = x.dim(2), width = x.dim(3);
  const int oh = height * factor, ow = width * factor;
  Tensor out = detail::make_output({batch, ch, oh, ow}, "upsample_nearest", {x.shared_node()});
  const double* px = x.data();
  double* po = out.data();
  for (long long nc = 0; nc < static_cast<long long>(batch) * ch; ++nc) {
    const double* plane = px + nc * height * width;
    double* oplane = po + nc * oh * ow;
    for (int i = 0; i < oh; ++i) {
      const double* row = plane + (i / factor) * width;
      double* orow = oplane + static_cast<long long>(i) * ow;
      for (int j = 0; j < ow; ++j) orow[j] = row[j / factor];
    }
  }
  out.node_ptr()->backward_fn = [batch, ch, height, width, factor, oh, ow](detail::Node& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    for (long long nc = 0; nc < static_cast<long long>(batch) * ch; ++nc) {
      const double* gplane = self.grad.data() + nc * oh * ow;
      double* dplane = in.grad.data() + nc * height * width;
      for (int i = 0; i < oh; ++i) {
        const double* grow = gplane + static_cast<long long>(i) * ow;
        double* drow = dplane + (i / factor) * width;
        for (int j = 0; j < ow; ++j) drow[j / factor] += grow[j];
      }
    }
  };
  return out;
}

// [N,C,H,W] -> [N,C] per-channel spatial mean
inline Tensor global_avg_pool(const Tensor& x) {
  detail::require(x.ndim() == 4, "global_avg_pool: input must be NCHW");
  const int batch = x.dim(0), ch = x.dim(1);
  const long long hw = static_cast<long long>(x.dim(2)) * x.dim(3);
  Tensor out = detail::make_output({batch, ch}, "global_avg_pool", {x.shared_node()});
  const double* px = x.data();
  double* po = out.data();
  for (long long nc = 0; nc < static_cast<long long>(batch) * ch; ++nc) {
    double s = 0.0;
    const double* plane = px + nc * hw;
    for (long long i = 0; i < hw; ++i) s += plane[i];
    po[nc] = s / static_cast<double>(hw);
  }
  check_finite("global_avg_pool", out.values());
  out.node_ptr()->backward_fn = [hw](detail::Node& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    for (size_t nc = 0; nc < self.grad.size(); ++nc) {
      const double g = self.grad[nc] / static_cast<double>(hw);
      double* d = in.grad.data() + nc * hw;
      for (long long i = 0; i < hw; ++i) d[i] += g;
    }
  };
  return out;
}

// ---------------------------------------------------------------------------
// Softmax over the last axis (max-subtracted for stability)

inline Tensor softmax(const Tensor& x) {
  const int last = x.shape().back();
  const long long rows = x.size() / last;
  Tensor out = detail::make_output(x.shape(), "softmax", {x.shared_node()});
  const double* px = x.data();
  double* po = out.data();
  for (long long r = 0; r < rows; ++r) {
    const double* in = px + r * last;
    double* o = po + r * last;
    double m = in[0];
    for (int i = 1; i < last; ++i) m = std::max(m, in[i]);
    double z = 0.0;
    for (int i = 0; i < last; ++i) {
      o[i] = std::exp(in[i] - m);
      z += o[i];
    }
    for (int i = 0; i < last; ++i) o[i] /= z;
  }
  check_finite("softmax", out.values());
  out.node_ptr()->backward_fn = [last, rows](detail::Node& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    for (long long r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * last;
      const double* g = self.grad.data() + r * last;
      double* d = in.grad.data() + r * last;
      double dot = 0.0;
      for (int i = 0; i < last; ++i) dot += g[i] * y[i];
      for (int i = 0; i < last; ++i) d[i] += y[i] * (g[i] - dot);
    }
  };
  return out;
}

// ---------------------------------------------------------------------------
// Channel-wise product: x [N,C,H,W] scaled per channel by w [N,C]

inline Tensor channel_scale(const Tensor& x, const Tensor& w) {
  detail::require(x.ndim() == 4, "channel_scale: input must be NCHW");
  detail::require(w.ndim() == 2 && w.dim(0) == x.dim(0) && w.dim(1) == x.dim(1),
                  "channel_scale: weights must be [N,C] matching the input, got " +
                      shape_str(w.shape()) + " for " + shape_str(x.shape()));
  const long long hw = static_cast<long long>(x.dim(2)) * x.dim(3);
  Tensor out =
      detail::make_output(x.shape(), "channel_scale", {x.shared_node(), w.shared_node()});
  const double* px = x.data();
  const double* pw = w.data();
  double* po = out.data();
  for (long long nc = 0; nc < w.size(); ++nc) {
    const double s = pw[nc];
    const double* in = px + nc * hw;
    double* o = po + nc * hw;
    for (long long i = 0; i < hw; ++i) o[i] = s * in[i];
  }
  check_finite("channel_scale", out.values());
  out.node_ptr()->backward_fn = [hw](detail::Node& self) {
    auto& xn = *self.inputs[0];
    auto& wn = *self.inputs[1];
    for (size_t nc = 0; nc < wn.value.size(); ++nc) {
      const double* g = self.grad.data() + nc * hw;
      if (xn.requires_grad) {
        const double s = wn.value[nc];
        double* d = xn.grad.data() + nc * hw;
        for (long long i = 0; i < hw; ++i) d[i] += s * g[i];
      }
      if (wn.requires_grad) {
        const double* in = xn.value.data() + nc * hw;
        double s = 0.0;
        for (long long i = 0; i < hw; ++i) s += g[i] * in[i];
        wn.grad[nc] += s;
      }
    }
  };
  return out;
}

// ---------------------------------------------------------------------------
// Sigmoid cross-entropy, mean-reduced over every element.
// Stable form: max(z,0) - z*y + log(1 + exp(-|z|)).

inline Tensor sigmoid_ce(const Tensor& logits, const Tensor& labels) {
  detail::require(logits.shape() == labels.shape(),
                  "sigmoid_ce: logits " + shape_str(logits.shape()) + " vs labels " +
                      shape_str(labels.shape()));
  detail::require(!labels.requires_grad(), "sigmoid_ce: labels must not require gradients");
  const double* pl = labels.data();
  for (long long i = 0; i < labels.size(); ++i)
    detail::require(pl[i] == 0.0 || pl[i] == 1.0, "sigmoid_ce: labels must be exactly 0 or 1");

  Tensor out =
      detail::make_output({1}, "sigmoid_ce", {logits.shared_node(), labels.shared_node()});
  const double* pz = logits.data();
  const long long n = logits.size();
  double acc = 0.0;
  for (long long i = 0; i < n; ++i) {
    const double z = pz[i];
    acc += std::max(z, 0.0) - z * pl[i] + std::log1p(std::exp(-std::abs(z)));
  }
  out.data()[0] = acc / static_cast<double>(n);
  check_finite("sigmoid_ce", out.values());

  out.node_ptr()->backward_fn = [n](detail::Node& self) {
    auto& zn = *self.inputs[0];
    auto& yn = *self.inputs[1];
    if (!zn.requires_grad) return;
    const double g = self.grad[0] / static_cast<double>(n);
    for (long long i = 0; i < n; ++i)
      zn.grad[i] += g * (sigmoid_scalar(zn.value[i]) - yn.value[i]);
  };
  return out;
}

}  // namespace bfan
