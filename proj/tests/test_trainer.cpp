#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "bfan/trainer.hpp"

using namespace bfan;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_cfg(Ablation ab = Ablation::AffmPlus) {
  RunConfig cfg;
  cfg.input_h = cfg.input_w = 32;
  cfg.base_channels = 4;
  cfg.boundary_channels = 4;
  cfg.agg_channels = 8;
  cfg.rng_seed = 5;
  cfg.batch_size = 4;
  cfg.ablation = ab;
  return cfg;
}

fs::path temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("bfan_trainer_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

BfanNet::Output forward_on_zeros(const BfanNet& net, const RunConfig& cfg) {
  return net.forward(Tensor::zeros({1, 3, cfg.input_h, cfg.input_w}));
}

}  // namespace

TEST(Loss, AllZeroLogitsAndTargetsGiveLogTwoComponents) {
  const auto cfg = tiny_cfg();
  BfanNet net(cfg);
  for (auto& p : net.parameters())
    std::fill(p.tensor.values().begin(), p.tensor.values().end(), 0.0);
  const auto out = forward_on_zeros(net, cfg);
  const Tensor masks = Tensor::zeros({1, 1, 32, 32});
  const Tensor boundaries = Tensor::zeros({1, 1, 32, 32});
  const auto loss = compute_loss(out, masks, boundaries, cfg);
  EXPECT_NEAR(loss.breakdown.final_saliency, std::log(2.0), 1e-12);
  for (double v : loss.breakdown.stage_saliency) EXPECT_NEAR(v, std::log(2.0), 1e-12);
  for (double v : loss.breakdown.boundary) EXPECT_NEAR(v, std::log(2.0), 1e-12);
  // total = final + stage mean + boundary mean = 3 ln 2
  EXPECT_NEAR(loss.breakdown.total, 3.0 * std::log(2.0), 1e-11);
}

TEST(Loss, BaselineDropsBoundaryComponents) {
  const auto cfg = tiny_cfg(Ablation::Baseline);
  BfanNet net(cfg);
  const auto out = forward_on_zeros(net, cfg);
  const Tensor masks = Tensor::zeros({1, 1, 32, 32});
  const Tensor boundaries = Tensor::zeros({1, 1, 32, 32});
  const auto loss = compute_loss(out, masks, boundaries, cfg);
  EXPECT_TRUE(loss.breakdown.boundary.empty());
  double stage_sum = 0.0;
  for (double v : loss.breakdown.stage_saliency) stage_sum += v;
  EXPECT_NEAR(loss.breakdown.total,
              loss.breakdown.final_saliency + stage_sum / 5.0, 1e-11);
}

TEST(Loss, SaturatedCorrectLogitsVanish) {
  const auto cfg = tiny_cfg();
  Rng rng(2);
  Tensor masks = Tensor::zeros({1, 1, 32, 32});
  for (long long i = 0; i < masks.size(); ++i) masks.data()[i] = rng.next_below(2) ? 1.0 : 0.0;
  Tensor boundaries = Tensor::zeros({1, 1, 32, 32});
  for (long long i = 0; i < boundaries.size(); ++i)
    boundaries.data()[i] = rng.next_below(8) == 0 ? 1.0 : 0.0;

  // hand-build a perfect output
  BfanNet::Output out;
  auto saturated = [](const Tensor& target) {
    Tensor t = Tensor::zeros(target.shape());
    for (long long i = 0; i < t.size(); ++i) t.data()[i] = target.data()[i] > 0.5 ? 50.0 : -50.0;
    return t;
  };
  out.preds.final_map = saturated(masks);
  for (int tau = 1; tau <= 5; ++tau) out.preds.stages[tau] = saturated(masks);
  Tensor bt = boundaries;
  for (int tau = 1; tau <= 5; ++tau) {
    bt = maxpool2(bt);
    out.boundary.logits.push_back(saturated(bt));
  }
  const auto loss = compute_loss(out, masks, boundaries, tiny_cfg());
  EXPECT_LT(loss.breakdown.total, 1e-10);
}

TEST(Loss, FiniteAtInitializationForAllVariants) {
  for (Ablation ab : {Ablation::Baseline, Ablation::BoundaryMinus, Ablation::BoundaryPlus,
                      Ablation::AffmPlus}) {
    const auto cfg = tiny_cfg(ab);
    BfanNet net(cfg);
    Rng rng(3);
    Tensor img = Tensor::zeros({2, 3, 32, 32});
    for (long long i = 0; i < img.size(); ++i) img.data()[i] = rng.uniform(-120, 120);
    Tensor masks = Tensor::zeros({2, 1, 32, 32});
    for (long long i = 0; i < masks.size(); ++i) masks.data()[i] = rng.next_below(2) ? 1.0 : 0.0;
    Tensor boundaries = Tensor::zeros({2, 1, 32, 32});
    const auto loss = compute_loss(net.forward(img), masks, boundaries, cfg);
    EXPECT_TRUE(std::isfinite(loss.breakdown.total));
  }
}

TEST(Loss, BoundaryParamsGetFusionGradientsEvenWithZeroLambda) {
  auto cfg = tiny_cfg(Ablation::AffmPlus);
  cfg.lambda_boundary = 0.0;
  BfanNet net(cfg);
  Rng rng(4);
  Tensor img = Tensor::zeros({1, 3, 32, 32});
  for (long long i = 0; i < img.size(); ++i) img.data()[i] = rng.uniform(-1, 1);
  Tensor masks = Tensor::zeros({1, 1, 32, 32});
  for (long long i = 0; i < masks.size(); ++i) masks.data()[i] = rng.next_below(2) ? 1.0 : 0.0;
  Tensor boundaries = Tensor::zeros({1, 1, 32, 32});

  const auto loss = compute_loss(net.forward(img), masks, boundaries, cfg);
  loss.total.backward();
  double benc_grad = 0.0;
  for (const auto& p : net.parameters()) {
    if (p.name.rfind("benc.", 0) != 0 || !p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) benc_grad += std::abs(g);
  }
  EXPECT_GT(benc_grad, 0.0);  // boundary usage is independent of boundary supervision
}

TEST(Train, OneEpochEightSamplesBatchEightIsOneStep) {
  auto cfg = tiny_cfg();
  cfg.batch_size = 8;
  const auto samples = gen_synthetic(8, 32, 11);
  const auto res = train(samples, cfg, 1, temp_dir("steps"));
  EXPECT_EQ(res.steps, 1);
}

TEST(Train, RequiresEnoughSamples) {
  auto cfg = tiny_cfg();
  cfg.batch_size = 8;
  const auto samples = gen_synthetic(4, 32, 12);
  EXPECT_THROW(train(samples, cfg, 1, temp_dir("few")), ConfigError);
  EXPECT_THROW(train({}, cfg, 1, temp_dir("none")), ConfigError);
}

TEST(Train, DeterministicLossLogsAndCheckpoints) {
  const auto samples = gen_synthetic(8, 32, 13);
  const auto cfg = tiny_cfg();
  const fs::path d1 = temp_dir("det1"), d2 = temp_dir("det2");
  train(samples, cfg, 3, d1);
  train(samples, cfg, 3, d2);
  EXPECT_EQ(slurp(d1 / "loss_log.csv"), slurp(d2 / "loss_log.csv"));
  EXPECT_EQ(slurp(d1 / "checkpoint.bfan"), slurp(d2 / "checkpoint.bfan"));
  EXPECT_NE(slurp(d1 / "checkpoint.bfan"), "");
}

TEST(Checkpoint, RoundTripReproducesForwardBitExactly) {
  const auto samples = gen_synthetic(8, 32, 14);
  const auto cfg = tiny_cfg();
  const fs::path dir = temp_dir("roundtrip");
  train(samples, cfg, 2, dir);

  const LoadedModel m1 = load_checkpoint(dir / "checkpoint.bfan");
  const LoadedModel m2 = load_checkpoint(dir / "checkpoint.bfan");
  EXPECT_EQ(m1.epoch, 2u);
  const Tensor img = prepare_sample(samples[0], cfg).image;
  Tensor batch = Tensor::zeros({1, 3, 32, 32});
  std::copy(img.data(), img.data() + img.size(), batch.data());
  const auto o1 = m1.net->forward(batch), o2 = m2.net->forward(batch);
  EXPECT_EQ(o1.preds.final_map.values(), o2.preds.final_map.values());

  // save -> load -> save is byte-stable
  SgdOptimizer opt(m1.net->parameters(), m1.lr, m1.momentum, m1.weight_decay);
  opt.velocities() = m1.velocities;
  const fs::path again = dir / "again.bfan";
  save_checkpoint(again, *m1.net, opt, m1.epoch, m1.rng_state);
  EXPECT_EQ(slurp(dir / "checkpoint.bfan"), slurp(again));
}

TEST(Checkpoint, CorruptionIsDetected) {
  const auto samples = gen_synthetic(8, 32, 15);
  const auto cfg = tiny_cfg();
  const fs::path dir = temp_dir("corrupt");
  train(samples, cfg, 1, dir);
  auto bytes = slurp(dir / "checkpoint.bfan");
  bytes[0] = 'X';
  std::ofstream f(dir / "bad.bfan", std::ios::binary);
  f << bytes;
  f.close();
  EXPECT_THROW(load_checkpoint(dir / "bad.bfan"), IoError);
  std::ofstream g(dir / "short.bfan", std::ios::binary);
  g << bytes.substr(0, bytes.size() / 2);
  g.close();
  EXPECT_THROW(load_checkpoint(dir / "short.bfan"), IoError);
}

TEST(Infer, ZeroWeightCheckpointGivesConstantHalf) {
  const auto cfg = tiny_cfg();
  BfanNet net(cfg);
  for (auto& p : net.parameters())
    std::fill(p.tensor.values().begin(), p.tensor.values().end(), 0.0);
  RgbImage img(32, 32);
  const auto res = infer_one(net, img);
  for (std::uint8_t v : res.saliency.px) EXPECT_EQ(v, 128);  // sigmoid(0) -> 128
}

TEST(Infer, DeterministicOutputsAndBoundaryDumps) {
  const auto cfg = tiny_cfg();
  BfanNet net(cfg);
  const auto samples = gen_synthetic(1, 32, 16);
  const auto r1 = infer_one(net, samples[0].image, true);
  const auto r2 = infer_one(net, samples[0].image, true);
  EXPECT_EQ(r1.saliency, r2.saliency);
  ASSERT_EQ(r1.boundaries.size(), 5u);
  for (int t = 0; t < 5; ++t) {
    EXPECT_EQ(r1.boundaries[static_cast<size_t>(t)].height, 16 >> t);
    EXPECT_EQ(r1.boundaries[static_cast<size_t>(t)], r2.boundaries[static_cast<size_t>(t)]);
  }
}

TEST(Train, LossDecreasesOnTinySmokeRun) {
  auto cfg = tiny_cfg();
  cfg.batch_size = 8;
  const auto samples = gen_synthetic(16, 32, 17);
  const auto res = train(samples, cfg, 10, temp_dir("smoke"));
  ASSERT_EQ(res.epoch_total.size(), 10u);
  EXPECT_LT(res.epoch_total.back(), res.epoch_total.front());
}
