#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "bfan/checkpoint.hpp"
#include "bfan/data.hpp"
#include "bfan/metrics.hpp"
#include "bfan/network.hpp"

namespace bfan {

// ---------------------------------------------------------------------------
// Loss assembly: sigmoid cross entropy on the final map, each supervised
// stage map, and each boundary logit map against the boundary mask pooled
// down to its scale. total = final + mean(stages) + lambda_b * mean(boundary).

struct LossBreakdown {
  double final_saliency = 0.0;
  std::vector<double> stage_saliency;
  std::vector<double> boundary;
  double total = 0.0;
};

struct LossResult {
  Tensor total;
  LossBreakdown breakdown;
};

// Per-scale boundary targets: 2x max-pooling preserves thin positive pixels.
inline Tensor boundary_target_at_scale(const Tensor& boundary_full, int tau) {
  Tensor t = boundary_full;
  for (int i = 0; i < tau; ++i) t = maxpool2(t);
  return t;
}

inline LossResult compute_loss(const BfanNet::Output& out, const Tensor& masks,
                               const Tensor& boundaries, const RunConfig& cfg) {
  LossResult res;
  const Tensor final_ce = sigmoid_ce(out.preds.final_map, masks);
  res.breakdown.final_saliency = final_ce.item();
  Tensor total = final_ce;

  if (cfg.supervise_stages) {
    Tensor stage_sum;
    for (const auto& [tau, logits] : out.preds.stages) {
      const Tensor ce = sigmoid_ce(logits, masks);
      res.breakdown.stage_saliency.push_back(ce.item());
      stage_sum = stage_sum.defined() ? add(stage_sum, ce) : ce;
    }
    total = add(total, scale(stage_sum, 1.0 / static_cast<double>(out.preds.stages.size())));
  }

  if (cfg.ablation != Ablation::Baseline) {
    Tensor boundary_sum;
    for (int t = 0; t < RunConfig::kScales; ++t) {
      const Tensor target = boundary_target_at_scale(boundaries, t + 1);
      const Tensor ce = sigmoid_ce(out.boundary.logits[static_cast<size_t>(t)], target);
      res.breakdown.boundary.push_back(ce.item());
      boundary_sum = boundary_sum.defined() ? add(boundary_sum, ce) : ce;
    }
    if (cfg.lambda_boundary != 0.0)
      total = add(total, scale(boundary_sum,
                               cfg.lambda_boundary / static_cast<double>(RunConfig::kScales)));
  }

  res.total = total;
  res.breakdown.total = total.item();

  // assembly invariant: the reported components recompose to the total
  double recomposed = res.breakdown.final_saliency;
  if (cfg.supervise_stages && !res.breakdown.stage_saliency.empty()) {
    double s = 0.0;
    for (double v : res.breakdown.stage_saliency) s += v;
    recomposed += s / static_cast<double>(res.breakdown.stage_saliency.size());
  }
  if (!res.breakdown.boundary.empty() && cfg.lambda_boundary != 0.0) {
    double s = 0.0;
    for (double v : res.breakdown.boundary) s += v;
    recomposed += cfg.lambda_boundary * s / static_cast<double>(RunConfig::kScales);
  }
  if (std::abs(recomposed - res.breakdown.total) >
      1e-12 * std::max(1.0, std::abs(res.breakdown.total)))
    throw ContractViolation("compute_loss: component sum drifted from the assembled total");
  return res;
}

// ---------------------------------------------------------------------------
// Batch assembly

struct PreparedSample {
  Tensor image;     // [3,H,W], preprocessed
  Tensor mask;      // [1,H,W] in {0,1}
  Tensor boundary;  // [1,H,W] in {0,1}, canny of the resized mask
};

inline PreparedSample prepare_sample(const SaliencySample& s, const RunConfig& cfg) {
  PreparedSample p;
  p.image = preprocess(s.image, cfg);
  const GrayImage m = (s.mask.height == cfg.input_h && s.mask.width == cfg.input_w)
                          ? s.mask
                          : resize_nearest(s.mask, cfg.input_h, cfg.input_w);
  const GrayImage b = (s.mask.height == cfg.input_h && s.mask.width == cfg.input_w)
                          ? s.boundary
                          : canny_boundary(m);
  p.mask = Tensor::zeros({1, cfg.input_h, cfg.input_w});
  p.boundary = Tensor::zeros({1, cfg.input_h, cfg.input_w});
  for (size_t i = 0; i < m.px.size(); ++i) {
    p.mask.data()[i] = m.px[i];
    p.boundary.data()[i] = b.px[i];
  }
  return p;
}

inline Tensor stack_batch(const std::vector<const Tensor*>& items) {
  std::vector<int> shape = items.at(0)->shape();
  shape.insert(shape.begin(), static_cast<int>(items.size()));
  Tensor out = Tensor::zeros(shape);
  double* p = out.data();
  for (const Tensor* t : items) {
    std::copy(t->data(), t->data() + t->size(), p);
    p += t->size();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainResult {
  std::filesystem::path checkpoint_path;
  std::filesystem::path loss_log_path;
  std::vector<double> epoch_total;  // epoch-mean total loss
  long long steps = 0;
  int epochs_run = 0;
};

inline TrainResult train(const std::vector<SaliencySample>& samples, const RunConfig& cfg,
                         int epochs, const std::filesystem::path& out_dir,
                         bool verbose = false) {
  cfg.validate();
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (static_cast<int>(samples.size()) < cfg.batch_size)
    throw ConfigError("train: need at least batch_size=" + std::to_string(cfg.batch_size) +
                      " samples, got " + std::to_string(samples.size()));
  std::filesystem::create_directories(out_dir);

  std::vector<PreparedSample> prepared;
  prepared.reserve(samples.size());
  for (const auto& s : samples) prepared.push_back(prepare_sample(s, cfg));

  BfanNet net(cfg);
  SgdOptimizer opt(net.parameters(), cfg.lr, cfg.momentum, cfg.weight_decay);
  Rng order_rng(cfg.rng_seed ^ 0x5b7a0e1c9d3f2468ULL);  // data-order stream

  const std::filesystem::path log_path = out_dir / "loss_log.csv";
  std::ofstream log(log_path);
  if (!log) throw IoError("train: cannot create '" + log_path.string() + "'");
  log << "epoch,lr,total,final,stage_mean,boundary_mean\n";

  const std::filesystem::path ckpt_path = out_dir / "checkpoint.bfan";
  TrainResult result;
  result.checkpoint_path = ckpt_path;
  result.loss_log_path = log_path;

  std::vector<size_t> indices(prepared.size());
  for (size_t i = 0; i < indices.size(); ++i) indices[i] = i;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    opt.set_lr(lr_schedule(epoch, cfg.lr));
    // Fisher-Yates on the fixed stream
    for (size_t i = indices.size() - 1; i > 0; --i) {
      const size_t j = static_cast<size_t>(order_rng.next_below(i + 1));
      std::swap(indices[i], indices[j]);
    }

    double ep_total = 0.0, ep_final = 0.0, ep_stage = 0.0, ep_boundary = 0.0;
    int nbatches = 0;
    for (size_t start = 0; start < indices.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t stop = std::min(indices.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<const Tensor*> imgs, msks, bnds;
      for (size_t i = start; i < stop; ++i) {
        imgs.push_back(&prepared[indices[i]].image);
        msks.push_back(&prepared[indices[i]].mask);
        bnds.push_back(&prepared[indices[i]].boundary);
      }
      const Tensor batch = stack_batch(imgs);
      const Tensor masks = stack_batch(msks);
      const Tensor boundaries = stack_batch(bnds);

      const auto out = net.forward(batch);
      const LossResult loss = compute_loss(out, masks, boundaries, cfg);
      opt.zero_grad();
      loss.total.backward();
      opt.step();
      ++result.steps;
      ++nbatches;

      ep_total += loss.breakdown.total;
      ep_final += loss.breakdown.final_saliency;
      double s = 0.0;
      for (double v : loss.breakdown.stage_saliency) s += v;
      ep_stage += loss.breakdown.stage_saliency.empty()
                      ? 0.0
                      : s / static_cast<double>(loss.breakdown.stage_saliency.size());
      double bsum = 0.0;
      for (double v : loss.breakdown.boundary) bsum += v;
      ep_boundary +=
          loss.breakdown.boundary.empty() ? 0.0 : bsum / static_cast<double>(loss.breakdown.boundary.size());
    }
    ep_total /= nbatches;
    ep_final /= nbatches;
    ep_stage /= nbatches;
    ep_boundary /= nbatches;
    result.epoch_total.push_back(ep_total);
    result.epochs_run = epoch + 1;

    char row[256];
    std::snprintf(row, sizeof(row), "%d,%.12g,%.12g,%.12g,%.12g,%.12g\n", epoch, opt.lr(),
                  ep_total, ep_final, ep_stage, ep_boundary);
    log << row << std::flush;
    if (verbose)
      std::fprintf(stderr, "epoch %d lr %.3g total %.5f\n", epoch, opt.lr(), ep_total);

    const bool last = epoch + 1 == epochs;
    if (last || (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0))
      save_checkpoint(ckpt_path, net, opt, static_cast<std::uint64_t>(epoch + 1),
                      order_rng.state());

    if (cfg.plateau_stop && result.epoch_total.size() >= 6) {
      const double prev = result.epoch_total[result.epoch_total.size() - 6];
      const double now = ep_total;
      if ((prev - now) / std::max(std::abs(prev), 1e-12) < 1e-3) {
        if (!last)
          save_checkpoint(ckpt_path, net, opt, static_cast<std::uint64_t>(epoch + 1),
                          order_rng.state());
        break;
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Inference

inline GrayImage logits_to_gray(const Tensor& logits, int plane) {
  const int h = logits.dim(2), w = logits.dim(3);
  GrayImage img(h, w);
  const double* p = logits.data() + static_cast<long long>(plane) * h * w;
  for (size_t i = 0; i < img.px.size(); ++i)
    img.px[i] = static_cast<std::uint8_t>(std::lround(255.0 * sigmoid_scalar(p[i])));
  return img;
}

struct InferenceResult {
  GrayImage saliency;                  // round(255 * sigmoid(final logits))
  std::vector<GrayImage> boundaries;   // per-scale boundary predictions
};

inline InferenceResult infer_one(const BfanNet& net, const RgbImage& image,
                                 bool dump_boundaries = false,
                                 const std::set<int>* subset_override = nullptr) {
  const RunConfig& cfg = net.config();
  std::vector<int> shape{1, 3, cfg.input_h, cfg.input_w};
  const Tensor pre = preprocess(image, cfg);
  Tensor batch = Tensor::zeros(shape);
  std::copy(pre.data(), pre.data() + pre.size(), batch.data());

  const auto out = net.forward(batch);
  InferenceResult res;
  const Tensor final_map =
      subset_override ? net.merge_subset(out.preds, *subset_override) : out.preds.final_map;
  res.saliency = logits_to_gray(final_map, 0);
  if (dump_boundaries && cfg.ablation != Ablation::Baseline)
    for (const auto& logit : out.boundary.logits) res.boundaries.push_back(logits_to_gray(logit, 0));
  return res;
}

}  // namespace bfan
