#include <gtest/gtest.h>

#include "rcaiunet/loss.hpp"
#include "rcaiunet/random.hpp"
#include "rcaiunet/suites.hpp"

using namespace rca;

TEST(Loss, CombinedIsHalfBcePlusHalfDice) {
  Rng rng(1);
  Tensor y({1, 1, 8, 8}), p({1, 1, 8, 8});
  for (std::size_t i = 0; i < 64; ++i) {
    y[i] = rng.uniform() < 0.4;
    p[i] = rng.uniform(0.01, 0.99);
  }
  const auto r = loss::combined_loss(y, p);
  EXPECT_NEAR(r.total, 0.5 * (r.bce_mean + r.dice), 1e-12);
  EXPECT_NEAR(r.bce_sum, r.bce_mean * 64, 1e-9);
}

TEST(Loss, DiceIsOneMinusSoftDice) {
  const Tensor y({4}, std::vector<double>{1, 0, 1, 1});
  const Tensor p({4}, std::vector<double>{0.9, 0.2, 0.4, 0.7});
  EXPECT_NEAR(loss::dice_loss(y, p), 1.0 - loss::soft_dice(y, p), 1e-15);
}

TEST(Loss, PerfectPredictionHasTinyLoss) {
  const Tensor y({4}, std::vector<double>{1, 0, 1, 0});
  EXPECT_LT(loss::combined_loss(y, y).total, 1e-6);
}

TEST(Loss, PermutationInvariant) {
  const Tensor y({4}, std::vector<double>{1, 0, 1, 1});
  const Tensor p({4}, std::vector<double>{0.9, 0.2, 0.4, 0.7});
  const Tensor yp({4}, std::vector<double>{1, 1, 0, 1});
  const Tensor pp({4}, std::vector<double>{0.7, 0.4, 0.2, 0.9});
  EXPECT_NEAR(loss::combined_loss(y, p).total, loss::combined_loss(yp, pp).total, 1e-15);
}

TEST(Loss, IdentitiesAndFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto c = suites::loss_checks(seed);
    EXPECT_LE(c.split_identity_err, 1e-12);
    EXPECT_LE(c.bce_closed_form_err, 1e-9);
    EXPECT_LE(c.combined_linearity_err, 1e-12);
    EXPECT_LT(c.autograd_vs_numeric, 1e-5);
  }
}

TEST(Loss, DiceGradientMatchesFiniteDifferences) {
  Rng rng(5);
  Tensor y({16}), p({16});
  for (std::size_t i = 0; i < 16; ++i) {
    y[i] = rng.uniform() < 0.5;
    p[i] = rng.uniform(0.1, 0.9);
  }
  for (const auto& row : loss::dice_gradient_table(y, p)) EXPECT_NEAR(row.autograd, row.numeric, 1e-7);
}

TEST(Loss, QuotedDiceGradientSingleton) {
  // -2 * 1 * (1 - 0.25) / 1.25^2
  const Tensor g = loss::reference_dice_gradient(Tensor({1}, 1.0), Tensor({1}, 0.5));
  EXPECT_NEAR(g[0], -0.96, 1e-12);
}

TEST(Loss, QuotedDiceGradientDegenerateCases) {
  const Tensor y({3}, std::vector<double>{1, 0, 1});
  const Tensor same = loss::reference_dice_gradient(y, y);
  const Tensor empty = loss::reference_dice_gradient(Tensor({3}), Tensor({3}, 0.4));
  for (double v : same.data()) EXPECT_EQ(v, 0.0);
  for (double v : empty.data()) EXPECT_EQ(v, 0.0);
}

TEST(Loss, QuotedDiceGradientDiffersFromTrueGradient) {
  Rng rng(6);
  Tensor y({16}), p({16});
  for (std::size_t i = 0; i < 16; ++i) {
    y[i] = i % 2;
    p[i] = rng.uniform(0.1, 0.9);
  }
  double gap = 0;
  for (const auto& row : loss::dice_gradient_table(y, p)) gap = std::max(gap, std::abs(row.reference - row.numeric));
  EXPECT_GT(gap, 1e-3);
}
