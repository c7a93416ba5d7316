#pragma once

#include <functional>
#include <string>
#include <vector>

#include "bfan/gradcheck.hpp"
#include "bfan/network.hpp"
#include "bfan/trainer.hpp"

// Finite-difference suite covering every differentiable op and the full
// attention-fusion network at a tiny configuration. Shared by the gradcheck
// CLI subcommand and the acceptance tests.

namespace bfan {

struct SuiteCheck {
  std::string name;
  int seeds = 10;
  std::function<GradCheckResult(std::uint64_t seed)> run;
};

namespace detail_suite {

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (long long i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

inline Tensor random_binary(std::vector<int> shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (long long i = 0; i < t.size(); ++i) t.data()[i] = rng.next_below(2) ? 1.0 : 0.0;
  return t;
}

// Fixed positive covector; pairing outputs with it keeps the scalar check
// function linear in the op output, which conditions the finite differences
// far better than a quadratic functional.
inline Tensor covector_like(const Tensor& y, Rng& rng) {
  Tensor w = Tensor::zeros(y.shape());
  for (long long i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(0.5, 1.5);
  return w;
}

}  // namespace detail_suite

inline std::vector<SuiteCheck> gradcheck_suite() {
  using detail_suite::random_binary;
  using detail_suite::random_tensor;
  std::vector<SuiteCheck> suite;

  suite.push_back({"add", 10, [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor a = random_tensor({2, 3, 4, 4}, rng);
    Tensor b = random_tensor({2, 3, 4, 4}, rng);
    auto r = grad_check([&]() { return sum(add(a, b)); }, a);
    r.merge(grad_check([&]() { return sum(add(a, b)); }, b));
    return r;
  }});
  suite.push_back({"mul", 10, [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor a = random_tensor({3, 5}, rng);
    Tensor b = random_tensor({3, 5}, rng);
    return grad_check([&]() { return sum(mul(a, b)); }, a);
  }});
  suite.push_back({"relu", 10, [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor({2, 4, 6, 6}, rng);
    return grad_check([&]() { return sum(relu(x)); }, x);
  }});
  suite.push_back({"sigmoid", 10, [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor({2, 4, 6, 6}, rng, -3.0, 3.0);
    Tensor w = detail_suite::covector_like(x, rng);
    return grad_check([&]() { return sum(mul(sigmoid(x), w)); }, x);
  }});
  suite.push_back({"conv2d", 10, [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor({2, 3, 8, 8}, rng);
    Tensor k = random_tensor({4, 3, 3, 3}, rng, -0.5, 0.5);
    Tensor b = random_tensor({4}, rng, -0.2, 0.2);
    Tensor w = detail_suite::covector_like(conv2d(x, k, b, 1, 1), rng);
    auto f = [&]() { return sum(mul(conv2d(x, k, b, 1, 1), w)); };
    auto r = grad_check(f, x);
    r.merge(grad_check(f, k));
    r.merge(grad_check(f, b));
    return r;
  }});
  suite.push_back({"conv2d_strided", 10, [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor({1, 2, 9, 9}, rng);
    Tensor k = random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5);
    Tensor b = random_tensor({3}, rng, -0.2, 0.2);
    Tensor w = detail_suite::covector_like(conv2d(x, k, b, 2, 0), rng);
    auto f = [&]() { return sum(mul(conv2d(x, k, b, 2, 0), w)); };
    auto r = grad_check(f, x);
    r.merge(grad_check(f, k));
    return r;
  }});
  suite.push_back({"deconv2d", 10, [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor({2, 3, 4, 4}, rng);
    Tensor k = random_tensor({3, 2, 4, 4}, rng, -0.5, 0.5);
    Tensor b = random_tensor({2}, rng, -0.2, 0.2);
    Tensor w = detail_suite::covector_like(deconv2d(x, k, b, 2, 1), rng);
    auto f = [&]() { return sum(mul(deconv2d(x, k, b, 2, 1), w)); };
    auto r = grad_check(f, x);
    r.merge(grad_check(f, k));
    r.merge(grad_check(f, b));
    return r;
  }});
  suite.push_back({"maxpool2", 10, [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor({2, 3, 6, 6}, rng);
    Tensor w = detail_suite::covector_like(maxpool2(x), rng);
    return grad_check([&]() { return sum(mul(maxpool2(x), w)); }, x);
  }});
  suite.push_back({"avgpool2", 10, [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor({2, 3, 6, 6}, rng);
    Tensor w = detail_suite::covector_like(avgpool2(x), rng);
    return grad_check([&]() { return sum(mul(avgpool2(x), w)); }, x);
  }});
  suite.push_back({"upsample_nearest", 10, [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor({1, 3, 4, 4}, rng);
    Tensor w = detail_suite::covector_like(upsample_nearest(x, 2), rng);
    return grad_check([&]() { return sum(mul(upsample_nearest(x, 2), w)); }, x);
  }});
  suite.push_back({"global_avg_pool", 10, [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor({2, 4, 5, 5}, rng);
    Tensor w = detail_suite::covector_like(global_avg_pool(x), rng);
    return grad_check([&]() { return sum(mul(global_avg_pool(x), w)); }, x);
  }});
  suite.push_back({"softmax", 10, [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor({3, 6}, rng, -2.0, 2.0);
    Tensor w = random_tensor({3, 6}, rng, 0.5, 1.5, false);
    return grad_check([&]() { return sum(mul(softmax(x), w)); }, x);
  }});
  suite.push_back({"channel_scale", 10, [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor({2, 3, 4, 4}, rng);
    Tensor w = random_tensor({2, 3}, rng);
    Tensor cov = detail_suite::covector_like(x, rng);
    auto f = [&]() { return sum(mul(channel_scale(x, w), cov)); };
    auto r = grad_check(f, x);
    r.merge(grad_check(f, w));
    return r;
  }});
  suite.push_back({"concat_slice", 10, [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor a = random_tensor({2, 3, 4, 4}, rng);
    Tensor b = random_tensor({2, 2, 4, 4}, rng);
    Tensor cov = detail_suite::covector_like(slice(concat({a, b}, 1), 1, 1, 4), rng);
    auto f = [&]() {
      const Tensor c = concat({a, b}, 1);
      return sum(mul(slice(c, 1, 1, 4), cov));
    };
    auto r = grad_check(f, a);
    r.merge(grad_check(f, b));
    return r;
  }});
  suite.push_back({"sigmoid_ce", 10, [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor z = random_tensor({2, 1, 6, 6}, rng, -4.0, 4.0);
    Tensor y = random_binary({2, 1, 6, 6}, rng);
    return grad_check([&]() { return sigmoid_ce(z, y); }, z);
  }});
  suite.push_back({"rcu", 10, [](std::uint64_t seed) {
    Rng rng(seed);
    RcuBlock rcu = RcuBlock::create(3, false, rng);
    Tensor x = random_tensor({1, 3, 6, 6}, rng);
    Tensor w = detail_suite::covector_like(x, rng);
    auto f = [&]() { return sum(mul(rcu.forward(x), w)); };
    auto r = grad_check(f, x);
    r.merge(grad_check(f, rcu.conv1.kernel));
    return r;
  }});
  suite.push_back({"affm_fuse", 10, [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor f_feat = random_tensor({2, 3, 4, 4}, rng);
    Tensor b_feat = random_tensor({2, 3, 4, 4}, rng);
    Tensor w = detail_suite::covector_like(f_feat, rng);
    auto f = [&]() { return sum(mul(affm_fuse(f_feat, b_feat), w)); };
    auto r = grad_check(f, f_feat);
    r.merge(grad_check(f, b_feat));
    return r;
  }});

  // Full forward + loss of the attention-fusion model at a tiny config.
  // Finite differences on a deterministic sample of elements per parameter.
  suite.push_back({"full_net_affm", 3, [](std::uint64_t seed) {
    RunConfig cfg;
    cfg.input_h = cfg.input_w = 32;
    cfg.base_channels = 4;
    cfg.boundary_channels = 4;
    cfg.agg_channels = 8;
    cfg.rng_seed = seed;
    cfg.ablation = Ablation::AffmPlus;
    BfanNet net(cfg);

    Rng rng(seed + 17);
    Tensor images = detail_suite::random_tensor({1, 3, 32, 32}, rng, -1.0, 1.0, true);
    Tensor masks = detail_suite::random_binary({1, 1, 32, 32}, rng);
    Tensor boundaries = detail_suite::random_binary({1, 1, 32, 32}, rng);
    auto f = [&]() { return compute_loss(net.forward(images), masks, boundaries, cfg).total; };

    GradCheckResult res;
    for (const auto& p : net.parameters()) {
      std::vector<long long> idx;
      const int samples = std::min<long long>(4, p.tensor.size());
      for (int i = 0; i < samples; ++i)
        idx.push_back(static_cast<long long>(rng.next_below(static_cast<std::uint64_t>(p.tensor.size()))));
      res.merge(grad_check_indices(f, p.tensor, idx));
    }
    std::vector<long long> img_idx;
    for (int i = 0; i < 8; ++i)
      img_idx.push_back(static_cast<long long>(rng.next_below(static_cast<std::uint64_t>(images.size()))));
    res.merge(grad_check_indices(f, images, img_idx));
    return res;
  }});

  return suite;
}

struct SuiteOutcome {
  std::string name;
  GradCheckResult result;
};

inline std::vector<SuiteOutcome> run_gradcheck_suite(const std::string& only = "") {
  std::vector<SuiteOutcome> outcomes;
  for (const auto& check : gradcheck_suite()) {
    if (!only.empty() && check.name != only) continue;
    GradCheckResult agg;
    for (int s = 0; s < check.seeds; ++s) agg.merge(check.run(static_cast<std::uint64_t>(s) + 1));
    outcomes.push_back({check.name, agg});
  }
  if (outcomes.empty() && !only.empty())
    throw ConfigError("gradcheck: no check named '" + only + "'");
  return outcomes;
}

}  // namespace bfan
