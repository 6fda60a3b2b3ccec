#include "rcaiunet/loss.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace rca::loss {

namespace {

void check_pair(const Tensor& y, const Tensor& p) {
  if (y.shape() != p.shape()) {
    throw ShapeMismatch("loss: label " + shape_str(y.shape()) + " vs prediction " + shape_str(p.shape()));
  }
}

double clamp_p(double p) { return std::min(std::max(p, kClampEpsilon), 1.0 - kClampEpsilon); }

struct DiceSums {
  double yp = 0.0, yy = 0.0, pp = 0.0;
};

DiceSums dice_sums(const Tensor& y, const Tensor& p) {
  DiceSums s;
  for (std::size_t i = 0; i < y.numel(); ++i) {
    s.yp += y[i] * p[i];
    s.yy += y[i] * y[i];
    s.pp += p[i] * p[i];
  }
  return s;
}

}  // namespace

double bce_sum(const Tensor& y, const Tensor& p) {
  check_pair(y, p);
  double acc = 0.0;
  for (std::size_t i = 0; i < y.numel(); ++i) {
    const double q = clamp_p(p[i]);
    acc -= y[i] * std::log(q) + (1.0 - y[i]) * std::log(1.0 - q);
  }
  return acc;
}

double bce_mean(const Tensor& y, const Tensor& p) { return bce_sum(y, p) / static_cast<double>(y.numel()); }

double soft_dice(const Tensor& y, const Tensor& p) {
  check_pair(y, p);
  const DiceSums s = dice_sums(y, p);
  return (2.0 * s.yp + kDiceSmoothing) / (s.yy + s.pp + kDiceSmoothing);
}

double dice_loss(const Tensor& y, const Tensor& p) { return 1.0 - soft_dice(y, p); }

Var bce(const Var& p, const Tensor& y, bool mean) {
  check_pair(y, p->value);
  const Var yc = ag::constant(y);
  const Var ny = ag::constant(add(scale(y, -1.0), Tensor(y.shape(), 1.0)));
  const Var q = ag::clamp(p, kClampEpsilon, 1.0 - kClampEpsilon);
  const Var one_minus_q = ag::add_scalar(ag::scale(q, -1.0), 1.0);
  const Var ll = ag::add(ag::mul(yc, ag::log(q)), ag::mul(ny, ag::log(one_minus_q)));
  return ag::scale(mean ? ag::mean(ll) : ag::sum(ll), -1.0);
}

Var dice(const Var& p, const Tensor& y) {
  check_pair(y, p->value);
  const Var yc = ag::constant(y);
  const Var num = ag::add_scalar(ag::scale(ag::sum(ag::mul(yc, p)), 2.0), kDiceSmoothing);
  double yy = 0.0;
  for (double v : y.data()) yy += v * v;
  const Var den = ag::add_scalar(ag::sum(ag::mul(p, p)), yy + kDiceSmoothing);
  return ag::add_scalar(ag::scale(ag::div(num, den), -1.0), 1.0);
}

Var combined(const Var& p, const Tensor& y) { return ag::scale(ag::add(bce(p, y, true), dice(p, y)), 0.5); }

LossReport combined_loss(const Tensor& y, const Tensor& p) {
  check_pair(y, p);
  LossReport r;
  const Var pv = ag::parameter(p);
  const Var total = combined(pv, y);
  r.total = total->value.item();
  r.bce_mean = bce_mean(y, p);
  r.bce_sum = bce_sum(y, p);
  r.dice = dice_loss(y, p);
  r.grad = ag::backward(total)[pv];
  return r;
}

Tensor dice_gradient(const Tensor& y, const Tensor& p) {
  check_pair(y, p);
  const DiceSums s = dice_sums(y, p);
  const double num = 2.0 * s.yp + kDiceSmoothing;
  const double den = s.yy + s.pp + kDiceSmoothing;
  Tensor g(p.shape());
  for (std::size_t i = 0; i < p.numel(); ++i) {
    g[i] = -(2.0 * y[i] * den - num * 2.0 * p[i]) / (den * den);
  }
  return g;
}

Tensor reference_dice_gradient(const Tensor& y, const Tensor& p) {
  check_pair(y, p);
  const DiceSums s = dice_sums(y, p);
  const double den = (s.yy + s.pp) * (s.yy + s.pp);
  Tensor g(p.shape());
  for (std::size_t i = 0; i < p.numel(); ++i) {
    g[i] = den == 0.0 ? 0.0 : -2.0 * y[i] * (s.yy - s.pp) / den;
  }
  return g;
}

std::vector<DiceGradientRow> dice_gradient_table(const Tensor& y, const Tensor& p, double step) {
  check_pair(y, p);
  const Tensor ref = reference_dice_gradient(y, p);
  const Var pv = ag::parameter(p);
  const Tensor auto_grad = ag::backward(dice(pv, y))[pv];
  std::vector<DiceGradientRow> rows;
  Tensor probe = p;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + step;
    const double up = dice_loss(y, probe);
    probe[i] = saved - step;
    const double down = dice_loss(y, probe);
    probe[i] = saved;
    rows.push_back({i, y[i], p[i], ref[i], auto_grad[i], (up - down) / (2.0 * step)});
  }
  return rows;
}

std::string format_dice_gradient_table(const std::vector<DiceGradientRow>& rows) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%6s %4s %10s %14s %14s %14s %12s\n", "pixel", "y", "p", "closed_form",
                "autograd", "finite_diff", "closed-fd");
  os << line;
  double worst = 0.0;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%6zu %4.0f %10.6f %14.8f %14.8f %14.8f %12.3e\n", r.index, r.y, r.p,
                  r.reference, r.autograd, r.numeric, r.reference - r.numeric);
    os << line;
    worst = std::max(worst, std::abs(r.reference - r.numeric));
  }
  std::snprintf(line, sizeof line, "max |closed_form - finite_diff| = %.6e\n", worst);
  os << line;
  return os.str();
}

}  // namespace rca::loss
