#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rcaiunet/gradcheck.hpp"
#include "rcaiunet/loss.hpp"

namespace rca::suites {

struct CheckRun {
  std::string name;
  std::uint64_t seed = 0;
  ag::GradcheckReport report;
  double seconds = 0.0;
};

/// One gradcheck per layer type on a random [2, 2, 8, 8] input; the scalar is
/// sum(layer(x) * R) for a fixed random R. The input is checked as well.
std::vector<CheckRun> layer_gradchecks(std::uint64_t seed, const ag::GradcheckOptions& base = {});

/// Combined loss of the reduced model (C1 = 4, 1x1x32x32 input, random
/// labels) in train mode. Each perturbation only reruns the stages it can
/// affect.
CheckRun model_gradcheck(std::uint64_t seed, const ag::GradcheckOptions& base = {}, std::size_t base_channels = 4,
                         std::size_t size = 32);

struct LossChecks {
  double split_identity_err = 0;   // |L - (bce_mean + dice) / 2|
  double bce_closed_form_err = 0;  // autograd sum-form BCE vs (p - y) / (p (1 - p))
  double autograd_vs_numeric = 0;  // combined loss, max relative error
  double combined_linearity_err = 0;  // grad L vs (grad bce + grad dice) / 2
  std::vector<loss::DiceGradientRow> dice_table;
  std::string dice_table_text;
  double reference_max_abs_gap = 0;  // quoted closed form vs finite differences
  bool pass(double identity_tol = 1e-12, double bce_tol = 1e-9, double numeric_tol = 1e-5) const;
};

/// Loss identities on a random 16-pixel pair.
LossChecks loss_checks(std::uint64_t seed);

}  // namespace rca::suites
