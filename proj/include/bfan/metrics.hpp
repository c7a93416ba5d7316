#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "bfan/image.hpp"

// Saliency evaluation: PR curves over the 256 integer thresholds, F-measure
// with beta^2 = 0.3, adaptive-threshold F, and MAE. Conventions: precision is
// 1 when nothing is predicted, recall is 1 when the ground truth is empty.
// The PR sweep binarizes with strict S*255 > t; the adaptive threshold uses
// S >= t*.

namespace bfan {

struct PRCurve {
  std::array<double, 256> precision{};
  std::array<double, 256> recall{};
};

// S in [0,1], G binary {0,1}
struct SaliencyMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  static SaliencyMap from_gray(const GrayImage& g) {
    SaliencyMap s;
    s.height = g.height;
    s.width = g.width;
    s.values.resize(g.px.size());
    for (size_t i = 0; i < g.px.size(); ++i) s.values[i] = g.px[i] / 255.0;
    return s;
  }
};

namespace detail_metrics {

inline void check_pair(const SaliencyMap& s, const GrayImage& g, const char* who) {
  if (s.height != g.height || s.width != g.width)
    throw ContractViolation(std::string(who) + ": saliency map " + std::to_string(s.width) + "x" +
                            std::to_string(s.height) + " vs ground truth " +
                            std::to_string(g.width) + "x" + std::to_string(g.height));
  require_binary(g, who);
  for (double v : s.values)
    if (!(v >= 0.0 && v <= 1.0))
      throw ContractViolation(std::string(who) + ": saliency values must lie in [0,1]");
}

}  // namespace detail_metrics

inline double f_measure(double precision, double recall, double beta2 = 0.3) {
  const double denom = beta2 * precision + recall;
  if (denom == 0.0) return 0.0;
  return (1.0 + beta2) * precision * recall / denom;
}

inline double mae(const SaliencyMap& s, const GrayImage& g) {
  detail_metrics::check_pair(s, g, "mae");
  double acc = 0.0;
  for (size_t i = 0; i < s.values.size(); ++i)
    acc += std::abs(s.values[i] - static_cast<double>(g.px[i]));
  return acc / static_cast<double>(s.values.size());
}

// For every integer threshold t in [0,255]: predict where S*255 > t.
// Computed with one histogram pass: a pixel with value v = S*255 is predicted
// for exactly the thresholds t <= c(v), where c(v) = v-1 for integral v and
// floor(v) otherwise.
inline PRCurve pr_curve(const SaliencyMap& s, const GrayImage& g) {
  detail_metrics::check_pair(s, g, "pr_curve");
  std::array<long long, 256> pos{}, neg{};
  for (size_t i = 0; i < s.values.size(); ++i) {
    const double v = s.values[i] * 255.0;
    const double fl = std::floor(v);
    const int c = (v == fl) ? static_cast<int>(fl) - 1 : static_cast<int>(fl);
    if (c < 0) continue;
    (g.px[i] ? pos : neg)[static_cast<size_t>(std::min(c, 255))] += 1;
  }
  // suffix sums: predictions at threshold t are all pixels with c >= t
  long long tp = 0, fp = 0;
  long long gt_total = count_positive(g);
  PRCurve out;
  std::array<long long, 256> tp_at{}, fp_at{};
  for (int t = 255; t >= 0; --t) {
    tp += pos[static_cast<size_t>(t)];
    fp += neg[static_cast<size_t>(t)];
    tp_at[static_cast<size_t>(t)] = tp;
    fp_at[static_cast<size_t>(t)] = fp;
  }
  for (int t = 0; t < 256; ++t) {
    const long long tpp = tp_at[static_cast<size_t>(t)], fpp = fp_at[static_cast<size_t>(t)];
    out.precision[static_cast<size_t>(t)] =
        (tpp + fpp == 0) ? 1.0 : static_cast<double>(tpp) / static_cast<double>(tpp + fpp);
    out.recall[static_cast<size_t>(t)] =
        (gt_total == 0) ? 1.0 : static_cast<double>(tpp) / static_cast<double>(gt_total);
  }
  return out;
}

// Per-image F at the adaptive threshold t* = min(2*mean(S), 1), binarizing
// with S >= t*.
inline double adaptive_f(const SaliencyMap& s, const GrayImage& g, double beta2 = 0.3) {
  detail_metrics::check_pair(s, g, "adaptive_f");
  double mean = 0.0;
  for (double v : s.values) mean += v;
  mean /= static_cast<double>(s.values.size());
  const double thr = std::min(2.0 * mean, 1.0);
  long long tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < s.values.size(); ++i) {
    // t* = 0 only for the all-zero map, which predicts nothing
    const bool pred = thr > 0.0 ? s.values[i] >= thr : false;
    const bool pos = g.px[i] != 0;
    tp += pred && pos;
    fp += pred && !pos;
    fn += !pred && pos;
  }
  const double precision = (tp + fp == 0) ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = (tp + fn == 0) ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  return f_measure(precision, recall, beta2);
}

struct EvalReport {
  struct Row {
    std::string id;
    double fbeta;
    double mae;
  };
  std::vector<Row> per_image;
  PRCurve curve;        // precision/recall averaged per threshold
  double mean_fbeta = 0.0;
  double mean_mae = 0.0;
  double max_f = 0.0;   // best F over the averaged PR curve

  void finalize() {
    mean_fbeta = 0.0;
    mean_mae = 0.0;
    for (const auto& r : per_image) {
      mean_fbeta += r.fbeta;
      mean_mae += r.mae;
    }
    if (!per_image.empty()) {
      mean_fbeta /= static_cast<double>(per_image.size());
      mean_mae /= static_cast<double>(per_image.size());
    }
    max_f = 0.0;
    for (int t = 0; t < 256; ++t)
      max_f = std::max(max_f, f_measure(curve.precision[static_cast<size_t>(t)],
                                        curve.recall[static_cast<size_t>(t)]));
  }
};

inline EvalReport evaluate_set(const std::vector<std::string>& ids,
                               const std::vector<SaliencyMap>& preds,
                               const std::vector<GrayImage>& gts) {
  if (ids.size() != preds.size() || ids.size() != gts.size())
    throw ContractViolation("evaluate_set: ids, predictions, ground truths must align");
  if (ids.empty()) throw ContractViolation("evaluate_set: empty evaluation set");
  EvalReport rep;
  std::array<double, 256> psum{}, rsum{};
  for (size_t i = 0; i < ids.size(); ++i) {
    rep.per_image.push_back({ids[i], adaptive_f(preds[i], gts[i]), mae(preds[i], gts[i])});
    const PRCurve c = pr_curve(preds[i], gts[i]);
    for (int t = 0; t < 256; ++t) {
      psum[static_cast<size_t>(t)] += c.precision[static_cast<size_t>(t)];
      rsum[static_cast<size_t>(t)] += c.recall[static_cast<size_t>(t)];
    }
  }
  for (int t = 0; t < 256; ++t) {
    rep.curve.precision[static_cast<size_t>(t)] = psum[static_cast<size_t>(t)] / static_cast<double>(ids.size());
    rep.curve.recall[static_cast<size_t>(t)] = rsum[static_cast<size_t>(t)] / static_cast<double>(ids.size());
  }
  rep.finalize();
  return rep;
}

inline std::string fmt_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline void write_report_csv(const std::filesystem::path& path, const EvalReport& rep) {
  std::ofstream f(path);
  if (!f) throw IoError("metrics: cannot create '" + path.string() + "'");
  f << "id,fbeta,mae\n";
  for (const auto& r : rep.per_image)
    f << r.id << "," << fmt_metric(r.fbeta) << "," << fmt_metric(r.mae) << "\n";
  f << "mean," << fmt_metric(rep.mean_fbeta) << "," << fmt_metric(rep.mean_mae) << "\n";
  f << "max_f," << fmt_metric(rep.max_f) << ",\n";
}

inline void write_pr_csv(const std::filesystem::path& path, const PRCurve& curve) {
  std::ofstream f(path);
  if (!f) throw IoError("metrics: cannot create '" + path.string() + "'");
  f << "threshold,precision,recall\n";
  for (int t = 0; t < 256; ++t)
    f << t << "," << fmt_metric(curve.precision[static_cast<size_t>(t)]) << ","
      << fmt_metric(curve.recall[static_cast<size_t>(t)]) << "\n";
}

}  // namespace bfan
