#include <gtest/gtest.h>

#include <cmath>

#include "bfan/metrics.hpp"
#include "bfan/rng.hpp"

using namespace bfan;

namespace {

SaliencyMap make_map(int h, int w, std::vector<double> v) {
  SaliencyMap s;
  s.height = h;
  s.width = w;
  s.values = std::move(v);
  return s;
}

GrayImage make_mask(int h, int w, std::vector<int> v) {
  GrayImage g(h, w);
  for (size_t i = 0; i < v.size(); ++i) g.px[i] = static_cast<std::uint8_t>(v[i]);
  return g;
}

// Independent brute-force oracle: recount every threshold directly.
void oracle_pr(const SaliencyMap& s, const GrayImage& g, double* precision, double* recall) {
  for (int t = 0; t < 256; ++t) {
    long long tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < s.values.size(); ++i) {
      const bool pred = s.values[i] * 255.0 > static_cast<double>(t);
      const bool pos = g.px[i] != 0;
      tp += pred && pos;
      fp += pred && !pos;
      fn += !pred && pos;
    }
    precision[t] = (tp + fp == 0) ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    recall[t] = (tp + fn == 0) ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
}

}  // namespace

TEST(FMeasure, ClosedFormCases) {
  EXPECT_DOUBLE_EQ(f_measure(1.0, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(f_measure(0.0, 0.7), 0.0);
  EXPECT_DOUBLE_EQ(f_measure(0.0, 0.0), 0.0);
  EXPECT_NEAR(f_measure(0.8, 0.6), 1.3 * 0.8 * 0.6 / (0.3 * 0.8 + 0.6), 1e-15);
  EXPECT_NEAR(f_measure(0.8, 0.6), 0.742857142857, 1e-10);
}

TEST(FMeasure, BoundedAndMaximalOnlyAtPerfect) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const double p = rng.next_double(), r = rng.next_double();
    const double f = f_measure(p, r);
    EXPECT_GE(f, 0.0);
    EXPECT_LE(f, 1.0);
    if (f == 1.0) {
      EXPECT_DOUBLE_EQ(p, 1.0);
      EXPECT_DOUBLE_EQ(r, 1.0);
    }
  }
}

TEST(Mae, HandCases) {
  const auto g = make_mask(2, 2, {0, 0, 1, 1});
  EXPECT_DOUBLE_EQ(mae(make_map(2, 2, {0, 0, 1, 1}), g), 0.0);
  EXPECT_DOUBLE_EQ(mae(make_map(2, 2, {1, 1, 0, 0}), g), 1.0);
  EXPECT_NEAR(mae(make_map(2, 2, {0.2, 0.4, 0.6, 0.8}), g), 0.3, 1e-15);
}

TEST(Mae, ContractChecks) {
  const auto g = make_mask(2, 2, {0, 0, 1, 1});
  EXPECT_THROW(mae(make_map(2, 1, {0, 0}), g), ContractViolation);
  EXPECT_THROW(mae(make_map(2, 2, {0, 0, 1, 1.5}), g), ContractViolation);
}

TEST(PrCurve, PerfectPrediction) {
  const auto g = make_mask(2, 2, {0, 1, 1, 0});
  const auto s = make_map(2, 2, {0, 1, 1, 0});
  const PRCurve c = pr_curve(s, g);
  for (int t = 0; t <= 254; ++t) {
    EXPECT_DOUBLE_EQ(c.precision[static_cast<size_t>(t)], 1.0) << t;
    EXPECT_DOUBLE_EQ(c.recall[static_cast<size_t>(t)], 1.0) << t;
  }
  EXPECT_DOUBLE_EQ(c.precision[255], 1.0);  // nothing predicted at 255
  EXPECT_DOUBLE_EQ(c.recall[255], 0.0);
}

TEST(PrCurve, InvertedPrediction) {
  const auto g = make_mask(2, 2, {0, 1, 1, 0});
  const auto s = make_map(2, 2, {1, 0, 0, 1});
  const PRCurve c = pr_curve(s, g);
  for (int t = 0; t <= 254; ++t) EXPECT_DOUBLE_EQ(c.precision[static_cast<size_t>(t)], 0.0);
}

TEST(PrCurve, TwoByTwoExample) {
  const auto g = make_mask(2, 2, {0, 1, 1, 0});
  const auto s = make_map(2, 2, {0.2, 0.8, 0.6, 0.4});
  const PRCurve c = pr_curve(s, g);
  EXPECT_DOUBLE_EQ(c.precision[127], 1.0);
  EXPECT_DOUBLE_EQ(c.recall[127], 1.0);
  EXPECT_DOUBLE_EQ(c.precision[200], 1.0);
  EXPECT_DOUBLE_EQ(c.recall[200], 0.5);
}

TEST(PrCurve, RecallNonIncreasingInThreshold) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    SaliencyMap s;
    s.height = s.width = 8;
    s.values.resize(64);
    GrayImage g(8, 8);
    for (int i = 0; i < 64; ++i) {
      s.values[static_cast<size_t>(i)] = rng.next_double();
      g.px[static_cast<size_t>(i)] = rng.next_below(2) ? 1 : 0;
    }
    const PRCurve c = pr_curve(s, g);
    for (int t = 1; t < 256; ++t)
      EXPECT_LE(c.recall[static_cast<size_t>(t)], c.recall[static_cast<size_t>(t - 1)]);
  }
}

TEST(PrCurve, EmptyGroundTruthConvention) {
  const auto g = make_mask(2, 2, {0, 0, 0, 0});
  const auto s = make_map(2, 2, {0.5, 0.1, 0.9, 0.3});
  const PRCurve c = pr_curve(s, g);
  for (int t = 0; t < 256; ++t) EXPECT_DOUBLE_EQ(c.recall[static_cast<size_t>(t)], 1.0);
}

TEST(PrCurve, MatchesBruteForceOnRandomRealValues) {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    SaliencyMap s;
    s.height = s.width = 5;
    s.values.resize(25);
    GrayImage g(5, 5);
    for (int i = 0; i < 25; ++i) {
      s.values[static_cast<size_t>(i)] = rng.next_double();
      g.px[static_cast<size_t>(i)] = rng.next_below(2) ? 1 : 0;
    }
    double p[256], r[256];
    oracle_pr(s, g, p, r);
    const PRCurve c = pr_curve(s, g);
    for (int t = 0; t < 256; ++t) {
      EXPECT_EQ(c.precision[static_cast<size_t>(t)], p[t]) << t;
      EXPECT_EQ(c.recall[static_cast<size_t>(t)], r[t]) << t;
    }
  }
}

TEST(AdaptiveF, BinaryPerfectPrediction) {
  const auto g = make_mask(2, 2, {0, 1, 1, 0});  // mean 0.5 -> t* = 1, >= keeps the ones
  EXPECT_DOUBLE_EQ(adaptive_f(make_map(2, 2, {0, 1, 1, 0}), g), 1.0);
}

TEST(AdaptiveF, AllZeroMapPredictsNothing) {
  const auto g = make_mask(2, 2, {0, 1, 1, 0});
  const auto s = make_map(2, 2, {0, 0, 0, 0});
  // zero predictions: precision convention gives f_measure(1, 0) = 0
  EXPECT_DOUBLE_EQ(adaptive_f(s, g), 0.0);
}

TEST(AdaptiveF, SaturatingThresholdCorner) {
  // mean 0.5 -> t* = 1.0; no value reaches 1.0, so nothing is predicted:
  // precision convention 1, recall 0 -> F = 0
  const auto g = make_mask(2, 2, {0, 1, 1, 0});
  const auto s = make_map(2, 2, {0.2, 0.8, 0.6, 0.4});
  EXPECT_DOUBLE_EQ(adaptive_f(s, g), 0.0);
}

TEST(EvalReport, AggregatesAreMeans) {
  std::vector<std::string> ids{"a", "b"};
  std::vector<SaliencyMap> preds{make_map(2, 2, {0, 1, 1, 0}), make_map(2, 2, {1, 1, 0, 0})};
  std::vector<GrayImage> gts{make_mask(2, 2, {0, 1, 1, 0}), make_mask(2, 2, {0, 1, 1, 0})};
  const EvalReport rep = evaluate_set(ids, preds, gts);
  ASSERT_EQ(rep.per_image.size(), 2u);
  EXPECT_NEAR(rep.mean_fbeta, (rep.per_image[0].fbeta + rep.per_image[1].fbeta) / 2, 1e-15);
  EXPECT_NEAR(rep.mean_mae, (rep.per_image[0].mae + rep.per_image[1].mae) / 2, 1e-15);
  EXPECT_GT(rep.max_f, 0.0);
}
