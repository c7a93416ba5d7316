#include <gtest/gtest.h>

#include <cmath>

#include "bfan/gradcheck.hpp"
#include "bfan/layers.hpp"
#include "bfan/ops.hpp"
#include "bfan/optim.hpp"
#include "bfan/rng.hpp"

using namespace bfan;

namespace {

Tensor rand_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                   bool requires_grad = false) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (long long i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

// independent scatter-add oracle for transposed convolution, single image
std::vector<double> deconv_oracle(const Tensor& x, const Tensor& k, const Tensor& b, int stride,
                                  int pad) {
  const int in_c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int out_c = k.dim(1), ks = k.dim(2);
  const int oh = stride * h, ow = stride * w;
  std::vector<double> out(static_cast<size_t>(out_c) * oh * ow, 0.0);
  for (int ic = 0; ic < in_c; ++ic)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const double v = x.data()[(static_cast<long long>(ic) * h + i) * w + j];
        for (int oc = 0; oc < out_c; ++oc)
          for (int kh = 0; kh < ks; ++kh)
            for (int kw = 0; kw < ks; ++kw) {
              const int oi = i * stride - pad + kh;
              const int oj = j * stride - pad + kw;
              if (oi < 0 || oi >= oh || oj < 0 || oj >= ow) continue;
              out[(static_cast<size_t>(oc) * oh + oi) * ow + oj] +=
                  v * k.data()[((static_cast<long long>(ic) * out_c + oc) * ks + kh) * ks + kw];
            }
      }
  for (int oc = 0; oc < out_c; ++oc)
    for (long long i = 0; i < static_cast<long long>(oh) * ow; ++i)
      out[static_cast<size_t>(oc) * oh * ow + i] += b.data()[oc];
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// conv2d

TEST(Conv2d, IdentityPointwiseKernel) {
  Rng rng(1);
  Tensor x = rand_tensor({1, 1, 4, 4}, rng);
  Tensor k = Tensor::from_data({1, 1, 1, 1}, {1.0});
  Tensor b = Tensor::zeros({1});
  Tensor y = conv2d(x, k, b, 1, 0);
  ASSERT_EQ(y.shape(), x.shape());
  for (long long i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(y.data()[i], x.data()[i]);
}

TEST(Conv2d, AllOnesDotProduct) {
  Tensor x = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor k = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor b = Tensor::zeros({1});
  Tensor y = conv2d(x, k, b, 1, 0);
  ASSERT_EQ(y.shape(), (std::vector<int>{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(y.item(), 9.0);
}

TEST(Conv2d, MatchesDirectOracleWithStrideAndPadding) {
  Rng rng(5);
  Tensor x = rand_tensor({2, 3, 7, 7}, rng);
  Tensor k = rand_tensor({4, 3, 3, 3}, rng);
  Tensor b = rand_tensor({4}, rng);
  Tensor y = conv2d(x, k, b, 2, 1);
  ASSERT_EQ(y.shape(), (std::vector<int>{2, 4, 4, 4}));
  // direct nested-loop oracle
  for (int n = 0; n < 2; ++n)
    for (int oc = 0; oc < 4; ++oc)
      for (int oi = 0; oi < 4; ++oi)
        for (int oj = 0; oj < 4; ++oj) {
          double acc = b.data()[oc];
          for (int ic = 0; ic < 3; ++ic)
            for (int kh = 0; kh < 3; ++kh)
              for (int kw = 0; kw < 3; ++kw) {
                const int ii = oi * 2 - 1 + kh, jj = oj * 2 - 1 + kw;
                if (ii < 0 || ii >= 7 || jj < 0 || jj >= 7) continue;
                acc += x.data()[((static_cast<long long>(n) * 3 + ic) * 7 + ii) * 7 + jj] *
                       k.data()[((static_cast<long long>(oc) * 3 + ic) * 3 + kh) * 3 + kw];
              }
          EXPECT_NEAR(y.data()[((static_cast<long long>(n) * 4 + oc) * 4 + oi) * 4 + oj], acc,
                      1e-12);
        }
}

TEST(Conv2d, GradCheck) {
  Rng rng(11);
  Tensor x = rand_tensor({2, 3, 8, 8}, rng, -1, 1, true);
  Tensor k = rand_tensor({4, 3, 3, 3}, rng, -0.5, 0.5, true);
  Tensor b = rand_tensor({4}, rng, -0.1, 0.1, true);
  auto f = [&]() {
    const Tensor y = conv2d(x, k, b, 1, 1);
    return sum(mul(y, y));
  };
  EXPECT_TRUE(grad_check(f, x).pass);
  EXPECT_TRUE(grad_check(f, k).pass);
  EXPECT_TRUE(grad_check(f, b).pass);
}

TEST(Conv2d, ChannelMismatchIsContractViolation) {
  Tensor x = Tensor::zeros({1, 2, 4, 4});
  Tensor k = Tensor::zeros({1, 3, 3, 3});
  Tensor b = Tensor::zeros({1});
  EXPECT_THROW(conv2d(x, k, b, 1, 1), ContractViolation);
  Tensor k2 = Tensor::zeros({1, 2, 5, 5});
  EXPECT_THROW(conv2d(x, k2, b, 1, 0), ContractViolation);  // padded size < kernel
}

// ---------------------------------------------------------------------------
// deconv2d

TEST(Deconv2d, ExactDoubling) {
  Rng rng(2);
  Tensor x = rand_tensor({1, 2, 8, 8}, rng);
  Tensor k = rand_tensor({2, 3, 4, 4}, rng);
  Tensor b = rand_tensor({3}, rng);
  Tensor y = deconv2d(x, k, b, 2, 1);
  EXPECT_EQ(y.shape(), (std::vector<int>{1, 3, 16, 16}));
}

TEST(Deconv2d, ZeroKernelGivesZeros) {
  Rng rng(3);
  Tensor x = rand_tensor({1, 2, 4, 4}, rng);
  Tensor k = Tensor::zeros({2, 2, 4, 4});
  Tensor b = Tensor::zeros({2});
  Tensor y = deconv2d(x, k, b, 2, 1);
  ASSERT_EQ(y.shape(), (std::vector<int>{1, 2, 8, 8}));
  for (long long i = 0; i < y.size(); ++i) EXPECT_DOUBLE_EQ(y.data()[i], 0.0);
}

TEST(Deconv2d, MatchesScatterAddOracle) {
  // 1x1x2x2 input, 2x2 kernel, stride 2 (padding 0 keeps the exact-2x contract)
  Rng rng(4);
  Tensor x = rand_tensor({1, 1, 2, 2}, rng);
  Tensor k = rand_tensor({1, 1, 2, 2}, rng);
  Tensor b = rand_tensor({1}, rng);
  Tensor y = deconv2d(x, k, b, 2, 0);
  ASSERT_EQ(y.shape(), (std::vector<int>{1, 1, 4, 4}));
  const auto oracle = deconv_oracle(x, k, b, 2, 0);
  for (long long i = 0; i < y.size(); ++i) EXPECT_NEAR(y.data()[i], oracle[static_cast<size_t>(i)], 1e-12);
}

TEST(Deconv2d, LargerScatterAddOracle) {
  Rng rng(6);
  Tensor x = rand_tensor({1, 3, 5, 5}, rng);
  Tensor k = rand_tensor({3, 2, 4, 4}, rng);
  Tensor b = rand_tensor({2}, rng);
  Tensor y = deconv2d(x, k, b, 2, 1);
  const auto oracle = deconv_oracle(x, k, b, 2, 1);
  ASSERT_EQ(y.size(), static_cast<long long>(oracle.size()));
  for (long long i = 0; i < y.size(); ++i) EXPECT_NEAR(y.data()[i], oracle[static_cast<size_t>(i)], 1e-12);
}

TEST(Deconv2d, RejectsInexactConfigurations) {
  Tensor x = Tensor::zeros({1, 1, 4, 4});
  Tensor k = Tensor::zeros({1, 1, 3, 3});
  Tensor b = Tensor::zeros({1});
  EXPECT_THROW(deconv2d(x, k, b, 2, 1), ContractViolation);  // 3 - 2*1 != 2
  Rng rng(1);
  EXPECT_THROW(Deconv2dLayer::create(1, 1, 3, rng), ContractViolation);
}

TEST(Deconv2d, GradCheck) {
  Rng rng(7);
  Tensor x = rand_tensor({1, 2, 3, 3}, rng, -1, 1, true);
  Tensor k = rand_tensor({2, 2, 4, 4}, rng, -0.5, 0.5, true);
  Tensor b = rand_tensor({2}, rng, -0.1, 0.1, true);
  auto f = [&]() {
    const Tensor y = deconv2d(x, k, b, 2, 1);
    return sum(mul(y, y));
  };
  EXPECT_TRUE(grad_check(f, x).pass);
  EXPECT_TRUE(grad_check(f, k).pass);
  EXPECT_TRUE(grad_check(f, b).pass);
}

// ---------------------------------------------------------------------------
// pooling / upsampling / gap

TEST(Upsample, FactorOneIsIdentity) {
  Rng rng(8);
  Tensor x = rand_tensor({1, 2, 3, 3}, rng);
  Tensor y = upsample_nearest(x, 1);
  ASSERT_EQ(y.shape(), x.shape());
  for (long long i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(y.data()[i], x.data()[i]);
}

TEST(Upsample, BlockReplication) {
  Tensor x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor y = upsample_nearest(x, 2);
  const std::vector<double> want = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  ASSERT_EQ(y.size(), 16);
  for (int i = 0; i < 16; ++i) EXPECT_DOUBLE_EQ(y.data()[i], want[static_cast<size_t>(i)]);
}

TEST(Upsample, GradientCountsReplicas) {
  // d(sum(upsample_f(x)))/dx = factor^2 for every source pixel
  Tensor x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4}, true);
  sum(upsample_nearest(x, 3)).backward();
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 9.0);
}

TEST(GlobalAvgPool, ConstantAndHandMean) {
  Tensor c = Tensor::full({1, 2, 3, 3}, 2.5);
  Tensor y = global_avg_pool(c);
  ASSERT_EQ(y.shape(), (std::vector<int>{1, 2}));
  EXPECT_DOUBLE_EQ(y.data()[0], 2.5);
  EXPECT_DOUBLE_EQ(y.data()[1], 2.5);

  Tensor x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(global_avg_pool(x).item(), 2.5);
}

TEST(GlobalAvgPool, GradientIsUniform) {
  Tensor x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4}, true);
  sum(global_avg_pool(x)).backward();
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 0.25);
}

TEST(Pooling, MaxAndAvgValues) {
  Tensor x = Tensor::from_data({1, 1, 2, 2}, {1, 4, 3, 2});
  EXPECT_DOUBLE_EQ(maxpool2(x).item(), 4.0);
  EXPECT_DOUBLE_EQ(avgpool2(x).item(), 2.5);
  Tensor odd = Tensor::zeros({1, 1, 3, 3});
  EXPECT_THROW(maxpool2(odd), ContractViolation);
}

TEST(Pooling, MaxpoolRoutesGradientToArgmax) {
  Tensor x = Tensor::from_data({1, 1, 2, 2}, {1, 4, 3, 2}, true);
  sum(maxpool2(x)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 1.0);
  EXPECT_DOUBLE_EQ(x.grad()[2], 0.0);
  EXPECT_DOUBLE_EQ(x.grad()[3], 0.0);
}

// ---------------------------------------------------------------------------
// softmax

TEST(Softmax, UniformOnZeros) {
  Tensor v = Tensor::zeros({4});
  Tensor w = softmax(v);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(w.data()[i], 0.25, 1e-15);
}

TEST(Softmax, DirectEvaluation) {
  Tensor v = Tensor::from_data({2}, {0.0, std::log(3.0)});
  Tensor w = softmax(v);
  EXPECT_NEAR(w.data()[0], 0.25, 1e-12);
  EXPECT_NEAR(w.data()[1], 0.75, 1e-12);
}

TEST(Softmax, ShiftInvariance) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor v = rand_tensor({6}, rng, -2, 2);
    Tensor shifted = Tensor::zeros({6});
    for (int i = 0; i < 6; ++i) shifted.data()[i] = v.data()[i] + 100.0;
    Tensor a = softmax(v), b = softmax(shifted);
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-12);
  }
}

TEST(Softmax, SumsToOneWithPositiveEntries) {
  Rng rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor v = rand_tensor({8}, rng, -30, 30);
    Tensor w = softmax(v);
    double s = 0.0;
    for (int i = 0; i < 8; ++i) {
      EXPECT_GT(w.data()[i], 0.0);
      s += w.data()[i];
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

// ---------------------------------------------------------------------------
// sigmoid cross entropy

TEST(SigmoidCe, ClosedFormAtZeroLogit) {
  Tensor z = Tensor::zeros({1, 1, 1, 1});
  Tensor y = Tensor::full({1, 1, 1, 1}, 1.0);
  EXPECT_NEAR(sigmoid_ce(z, y).item(), std::log(2.0), 1e-12);
}

TEST(SigmoidCe, SaturatedCorrectLogitVanishes) {
  Tensor z = Tensor::full({1}, 50.0);
  Tensor y = Tensor::full({1}, 1.0);
  EXPECT_LT(sigmoid_ce(z, y).item(), 1e-20);
}

TEST(SigmoidCe, NonNegativeEverywhere) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor z = rand_tensor({3, 4}, rng, -20, 20);
    Tensor y = Tensor::zeros({3, 4});
    for (long long i = 0; i < y.size(); ++i) y.data()[i] = rng.next_below(2) ? 1.0 : 0.0;
    EXPECT_GE(sigmoid_ce(z, y).item(), 0.0);
  }
}

TEST(SigmoidCe, RejectsNonBinaryLabels) {
  Tensor z = Tensor::zeros({2});
  Tensor y = Tensor::from_data({2}, {0.0, 0.5});
  EXPECT_THROW(sigmoid_ce(z, y), ContractViolation);
}

TEST(SigmoidCe, GradCheck) {
  Rng rng(13);
  Tensor z = rand_tensor({2, 1, 4, 4}, rng, -3, 3, true);
  Tensor y = Tensor::zeros({2, 1, 4, 4});
  for (long long i = 0; i < y.size(); ++i) y.data()[i] = rng.next_below(2) ? 1.0 : 0.0;
  EXPECT_TRUE(grad_check([&]() { return sigmoid_ce(z, y); }, z).pass);
}

// ---------------------------------------------------------------------------
// concat / slice / channel_scale

TEST(ConcatSlice, RoundTripIsIdentity) {
  Rng rng(14);
  Tensor a = rand_tensor({2, 3, 4, 4}, rng);
  Tensor b = rand_tensor({2, 2, 4, 4}, rng);
  Tensor c = concat({a, b}, 1);
  ASSERT_EQ(c.shape(), (std::vector<int>{2, 5, 4, 4}));
  Tensor sa = slice(c, 1, 0, 3), sb = slice(c, 1, 3, 5);
  for (long long i = 0; i < a.size(); ++i) EXPECT_DOUBLE_EQ(sa.data()[i], a.data()[i]);
  for (long long i = 0; i < b.size(); ++i) EXPECT_DOUBLE_EQ(sb.data()[i], b.data()[i]);
}

TEST(ConcatSlice, ShapeMismatchRejected) {
  Tensor a = Tensor::zeros({1, 2, 4, 4});
  Tensor b = Tensor::zeros({1, 2, 5, 4});
  EXPECT_THROW(concat({a, b}, 1), ContractViolation);
  EXPECT_THROW(slice(a, 1, 2, 2), ContractViolation);
}

TEST(ChannelScale, BroadcastsOverSpace) {
  Tensor x = Tensor::full({1, 2, 2, 2}, 3.0);
  Tensor w = Tensor::from_data({1, 2}, {0.5, 2.0});
  Tensor y = channel_scale(x, w);
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(y.data()[i], 1.5);
  for (int i = 4; i < 8; ++i) EXPECT_DOUBLE_EQ(y.data()[i], 6.0);
}

// ---------------------------------------------------------------------------
// SGD and the schedule

TEST(Sgd, PlainGradientStep) {
  Tensor w = Tensor::scalar(1.0, true);
  SgdOptimizer opt({{"w", w}}, 0.1, 0.0, 0.0);
  sum(scale(w, 0.5)).backward();  // grad = 0.5
  opt.step();
  EXPECT_NEAR(w.item(), 0.95, 1e-15);
}

TEST(Sgd, WeightDecayOnly) {
  Tensor w = Tensor::scalar(1.0, true);
  SgdOptimizer opt({{"w", w}}, 0.1, 0.0, 0.0005);
  opt.step();  // zero gradient; decay pulls the weight down
  EXPECT_NEAR(w.item(), 0.99995, 1e-15);
}

TEST(Sgd, MomentumTwoStepRecurrence) {
  // momentum 0.9, lr 0.1, g=1 twice from w=0: v1=1,w=-0.1; v2=1.9,w=-0.29
  Tensor w = Tensor::scalar(0.0, true);
  SgdOptimizer opt({{"w", w}}, 0.1, 0.9, 0.0);
  for (int i = 0; i < 2; ++i) {
    opt.zero_grad();
    sum(scale(w, 1.0)).backward();  // grad = 1
    opt.step();
  }
  EXPECT_NEAR(w.item(), -0.29, 1e-15);
}

TEST(Sgd, ZeroLrIsIdentity) {
  Rng rng(15);
  Tensor w = rand_tensor({8}, rng, -1, 1, true);
  const std::vector<double> before = w.values();
  SgdOptimizer opt({{"w", w}}, 0.0, 0.9, 0.0005);
  sum(mul(w, w)).backward();
  opt.step();
  for (long long i = 0; i < w.size(); ++i) EXPECT_DOUBLE_EQ(w.data()[i], before[static_cast<size_t>(i)]);
}

TEST(LrSchedule, TenPercentDecayEveryTenEpochs) {
  EXPECT_DOUBLE_EQ(lr_schedule(0, 0.001), 0.001);
  EXPECT_DOUBLE_EQ(lr_schedule(9, 0.001), 0.001);
  EXPECT_DOUBLE_EQ(lr_schedule(10, 0.001), 0.0009);
  EXPECT_NEAR(lr_schedule(25, 0.001), 0.00081, 1e-18);
  EXPECT_THROW(lr_schedule(-1, 0.001), ContractViolation);
}

// ---------------------------------------------------------------------------
// layer init

TEST(Layers, MsraInitIsSeededAndScaled) {
  Rng a(42), b(42);
  Conv2dLayer l1 = Conv2dLayer::create(8, 16, 3, 1, 1, a);
  Conv2dLayer l2 = Conv2dLayer::create(8, 16, 3, 1, 1, b);
  for (long long i = 0; i < l1.kernel.size(); ++i)
    EXPECT_DOUBLE_EQ(l1.kernel.data()[i], l2.kernel.data()[i]);
  for (long long i = 0; i < l1.bias.size(); ++i) EXPECT_DOUBLE_EQ(l1.bias.data()[i], 0.0);

  // sample stddev should sit near sqrt(2/fan_in)
  double var = 0.0;
  for (long long i = 0; i < l1.kernel.size(); ++i) var += l1.kernel.data()[i] * l1.kernel.data()[i];
  var /= static_cast<double>(l1.kernel.size());
  const double want = 2.0 / (8 * 9);
  EXPECT_NEAR(var, want, want * 0.25);
}
