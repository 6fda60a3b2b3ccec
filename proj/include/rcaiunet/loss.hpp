#pragma once

#include <string>
#include <vector>

#include "rcaiunet/autograd.hpp"

namespace rca::loss {

using ag::Var;

inline constexpr double kClampEpsilon = 1e-7;
inline constexpr double kDiceSmoothing = 1e-6;

/// Loss values for one batch. `grad` is dL/dp for the combined loss.
struct LossReport {
  double total = 0.0;     // (bce_mean + dice) / 2
  double bce_mean = 0.0;  // used for training
  double bce_sum = 0.0;
  double dice = 0.0;
  Tensor grad;
};

// Plain evaluations. Sums run over every element of the batch.
double bce_sum(const Tensor& y, const Tensor& p);
double bce_mean(const Tensor& y, const Tensor& p);
/// 1 - (2 sum(y p) + s) / (sum(y^2) + sum(p^2) + s), s = kDiceSmoothing.
double dice_loss(const Tensor& y, const Tensor& p);
double soft_dice(const Tensor& y, const Tensor& p);

// Differentiable versions; p is clamped to [eps, 1 - eps] before the logs.
Var bce(const Var& p, const Tensor& y, bool mean);
Var dice(const Var& p, const Tensor& y);
/// (bce_mean + dice) / 2.
Var combined(const Var& p, const Tensor& y);

LossReport combined_loss(const Tensor& y, const Tensor& p);

/// Exact dL_dice/dp from the quotient rule.
Tensor dice_gradient(const Tensor& y, const Tensor& p);

/// Closed form -2 y (sum y^2 - sum p^2) / (sum y^2 + sum p^2)^2 as it is
/// usually quoted. It omits the cross term of the quotient rule, so it is
/// kept for comparison only and never used for training.
Tensor reference_dice_gradient(const Tensor& y, const Tensor& p);

/// Per-pixel comparison of the quoted closed form, the autograd gradient and
/// central differences of the dice loss.
struct DiceGradientRow {
  std::size_t index;
  double y, p;
  double reference;
  double autograd;
  double numeric;
};
std::vector<DiceGradientRow> dice_gradient_table(const Tensor& y, const Tensor& p, double step = 1e-6);
std::string format_dice_gradient_table(const std::vector<DiceGradientRow>& rows);

}  // namespace rca::loss
