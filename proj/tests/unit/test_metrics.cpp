#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rcaiunet/errors.hpp"
#include "rcaiunet/metrics.hpp"

using namespace rca;
using namespace rca::metrics;

namespace {

Mask from_bits(std::size_t h, std::size_t w, std::vector<std::uint8_t> bits) {
  Mask m(h, w);
  m.bits = std::move(bits);
  return m;
}

}  // namespace

TEST(Metrics, WorkedConfusionExample) {
  // TP 8, FP 2, FN 2, TN 4
  Mask p(1, 16), g(1, 16);
  for (int i = 0; i < 8; ++i) p.bits[i] = g.bits[i] = 1;
  p.bits[8] = p.bits[9] = 1;
  g.bits[10] = g.bits[11] = 1;
  const auto c = confusion(p, g);
  EXPECT_EQ(c.tp, 8u);
  EXPECT_EQ(c.fp, 2u);
  EXPECT_EQ(c.fn, 2u);
  EXPECT_EQ(c.tn, 4u);
  const auto m = basic_metrics(c);
  EXPECT_DOUBLE_EQ(m.accuracy, 12.0 / 16.0);
  EXPECT_DOUBLE_EQ(m.precision, 0.8);
  EXPECT_DOUBLE_EQ(m.recall, 0.8);
  EXPECT_DOUBLE_EQ(m.dice, 0.8);
  EXPECT_DOUBLE_EQ(iou(c), 8.0 / 12.0);
  EXPECT_DOUBLE_EQ(mae(p, g), 4.0 / 16.0);
}

TEST(Metrics, EmptyMasksFollowZeroDenominatorRule) {
  const Mask e(4, 4);
  const auto m = basic_metrics(confusion(e, e));
  EXPECT_EQ(m.dice, 1.0);
  EXPECT_EQ(m.precision, 1.0);
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_TRUE(m.dice_convention);
  Mask g(4, 4);
  g.bits[3] = 1;
  const auto n = basic_metrics(confusion(e, g));
  EXPECT_EQ(n.precision, 0.0);  // no predictions but a missed pixel
  EXPECT_EQ(n.recall, 0.0);
  EXPECT_FALSE(n.dice_convention);
}

TEST(Metrics, ShapeMismatchThrows) { EXPECT_THROW(confusion(Mask(2, 2), Mask(2, 3)), ShapeMismatch); }

TEST(Metrics, MatchBruteForceOracles) {
  Rng rng(11);
  for (int k = 0; k < 200; ++k) {
    const Mask p = oracle::random_mask(rng, 16, 16, 0.3), g = oracle::random_mask(rng, 16, 16, 0.3);
    const auto o = oracle::counts(p, g);
    const auto c = confusion(p, g);
    const auto m = basic_metrics(c);
    EXPECT_NEAR(m.accuracy, (o.tp + o.tn) / 256.0, 1e-12);
    if (o.tp + o.fp > 0) EXPECT_NEAR(m.precision, o.tp / (o.tp + o.fp), 1e-12);
    if (o.tp + o.fn > 0) EXPECT_NEAR(m.recall, o.tp / (o.tp + o.fn), 1e-12);
    EXPECT_NEAR(m.dice, 2 * o.tp / (2 * o.tp + o.fp + o.fn), 1e-12);
    const double j = iou(c);
    EXPECT_NEAR(m.dice, 2 * j / (1 + j), 1e-12);
    if (p.count() && g.count()) EXPECT_NEAR(ahd(p, g).value, oracle::exhaustive_ahd(p, g), 1e-9);
    Plane prob(16, 16);
    for (double& v : prob.values) v = rng.uniform();
    EXPECT_NEAR(miou(prob, g), oracle::loop_miou(prob, g), 1e-12);
  }
}

TEST(Metrics, MiouWorkedExample) {
  // 0.72 clears thresholds 0.50 .. 0.70 only: five IoUs of 1, five of 0
  Plane prob(1, 2);
  prob.values = {0.72, 0.0};
  const Mask g = from_bits(1, 2, {1, 0});
  EXPECT_NEAR(miou(prob, g), 0.5, 1e-12);
  const auto t = miou_thresholds();
  ASSERT_EQ(t.size(), 10u);
  EXPECT_DOUBLE_EQ(t.front(), 0.5);
  EXPECT_DOUBLE_EQ(t.back(), 0.95);
}

TEST(Metrics, MiouIsTwoTenthsWhenOnlyLowThresholdsHit) {
  Plane prob(1, 1);
  prob.values = {0.58};
  EXPECT_NEAR(miou(prob, from_bits(1, 1, {1})), 0.2, 1e-12);
}

TEST(Metrics, BinarizeIsStrict) {
  Plane prob(1, 2);
  prob.values = {0.5, 0.5000001};
  const Mask m = binarize(prob, 0.5);
  EXPECT_EQ(m.bits[0], 0);
  EXPECT_EQ(m.bits[1], 1);
}

TEST(Metrics, AhdSinglePoints) {
  Mask a(5, 5), b(5, 5);
  a(0, 0) = 1;
  b(3, 4) = 1;
  EXPECT_DOUBLE_EQ(ahd(a, b).value, 5.0);
  EXPECT_DOUBLE_EQ(ahd(b, a).value, 5.0);
  EXPECT_DOUBLE_EQ(ahd(a, a).value, 0.0);
}

TEST(Metrics, AhdEmptyMaskUsesDiagonal) {
  Mask a(3, 4), b(3, 4);
  b(1, 1) = 1;
  const Ahd r = ahd(a, b);
  EXPECT_TRUE(r.sentinel);
  EXPECT_DOUBLE_EQ(r.value, 5.0);
}

TEST(Metrics, CsvHasHeaderRowsAndMeans) {
  Mask p(2, 2), g(2, 2);
  p(0, 0) = g(0, 0) = 1;
  std::vector<ImageMetrics> rows{evaluate_pair("a", p, g), evaluate_pair("b", p, Mask(2, 2))};
  const std::string csv = metrics_csv(rows);
  EXPECT_EQ(csv.rfind("id,pp,Acc,Pr,R,DC,mIoU,AHD,MAE,flags\n", 0), 0u);
  EXPECT_NE(csv.find("\na,N,"), std::string::npos);
  EXPECT_NE(csv.find("\nmean,N,"), std::string::npos);
  const ImageMetrics mean = mean_row(rows, "N");
  EXPECT_DOUBLE_EQ(mean.dice, 0.5 * (rows[0].dice + rows[1].dice));
}
