#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rcaiunet/autograd.hpp"

namespace rca::ag {

struct NamedVar {
  std::string name;
  Var var;
};

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  std::size_t max_coords = 200;  // sampled coordinates per tensor
  std::uint64_t seed = 0;
  /// Skip coordinates whose +h and -h evaluations take different piecewise
  /// branches (ReLU sign, clamp, max-pool argmax) when the kink bends f
  /// within the step: one-sided slopes or the h and h/2 central differences
  /// disagree beyond `tolerance`. A skipped coordinate is replaced by another
  /// sample where the tensor has spare coordinates.
  bool skip_nonsmooth = true;
};

struct GradcheckRecord {
  std::string name;
  Shape shape;
  std::size_t sampled = 0;
  std::size_t skipped = 0;  // non-smooth coordinates left out
  double max_rel_err = 0.0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool pass = true;
};

struct GradcheckReport {
  std::vector<GradcheckRecord> records;
  double tolerance = 0.0;

  bool pass() const;
  double max_rel_err() const;
  /// Fixed-width plain-text table, one row per tensor.
  std::string table() const;
  /// One JSON object per line: name, shape, max_rel_err, pass.
  std::string json_lines() const;
};

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

/// Compares reverse-mode gradients of the scalar `f` against central
/// differences (f(p + h e_i) - f(p - h e_i)) / 2h.
///
/// A record fails when its max relative error reaches the tolerance or when
/// no coordinate of a non-empty tensor could be checked.
/// `f` must rebuild the graph from the current parameter values on each call.
/// Finite-difference evaluations run with recording disabled. Coordinates are
/// sampled without replacement by a PRNG seeded from `options.seed`; tensors
/// with at most `max_coords` elements are swept fully. Parameter values are
/// restored exactly afterwards.
GradcheckReport gradcheck(const std::function<Var()>& f, const std::vector<NamedVar>& params,
                          const GradcheckOptions& options = {});

/// Same check, with `eval(i)` returning the scalar after params[i] was
/// perturbed in place. Lets callers reuse work that params[i] cannot affect.
GradcheckReport gradcheck(const std::function<Var()>& f, const std::vector<NamedVar>& params,
                          const std::function<double(std::size_t)>& eval, const GradcheckOptions& options);

}  // namespace rca::ag
