#include "rcaiunet/layers.hpp"

#include <cmath>
#include <numeric>

namespace rca::nn {

// ---- cost model ---------------------------------------------------------------

std::size_t ConvSpec::output_size() const {
  return kernels::conv_geometry(input_size, input_size, kernel, stride, padding).out_h;
}

void ConvSpec::validate() const {
  if (kernel != 1 && kernel != 3 && kernel != 5) throw BadConfig("kernel size must be 1, 3 or 5");
  if (stride != 1 && stride != 2) throw BadConfig("stride must be 1 or 2");
  if (kernels < 1 || depth < 1) throw BadConfig("kernel count and depth must be >= 1");
  if (input_size < 1) throw BadConfig("input size must be >= 1");
}

ConvCost cost_model(const ConvSpec& spec, ConvKind kind) {
  spec.validate();
  const std::uint64_t f2 = spec.kernel * spec.kernel;
  const std::uint64_t p = spec.output_size();
  const std::uint64_t r = spec.kernels, d = spec.depth;
  if (kind == ConvKind::Standard) return {r * p * p * f2 * d, r * f2 * d};
  return {d * p * p * (f2 + r), d * (f2 + r)};
}

Rational Rational::reduced(std::uint64_t num, std::uint64_t den) {
  const std::uint64_t g = std::gcd(num, den);
  return g == 0 ? Rational{0, 1} : Rational{num / g, den / g};
}

Rational Rational::operator+(const Rational& o) const {
  return reduced(num * o.den + o.num * den, den * o.den);
}

Rational separable_cost_ratio(const ConvSpec& spec) {
  const ConvCost sep = cost_model(spec, ConvKind::DepthwiseSeparable);
  const ConvCost std_cost = cost_model(spec, ConvKind::Standard);
  return Rational::reduced(sep.parameters, std_cost.parameters);
}

// ---- helpers --------------------------------------------------------------------

Tensor he_uniform(Rng& rng, Shape shape, std::size_t fan_in, Init init) {
  const double gain2 = init == Init::Relu ? 2.0 : 1.0;
  const double limit = std::sqrt(3.0 * gain2 / static_cast<double>(fan_in));
  return rng.uniform_tensor(std::move(shape), -limit, limit);
}

std::size_t trainable_count(const Registry& reg) {
  std::size_t n = 0;
  for (const auto& p : reg.params) {
    if (p.var->requires_grad) n += p.var->value.numel();
  }
  return n;
}

// ---- Conv1x1 ------------------------------------------------------------------

Conv1x1::Conv1x1(std::size_t in, std::size_t out, bool with_bias, Rng& rng, Init init)
    : weight(ag::parameter(he_uniform(rng, {out, in, 1, 1}, in, init))) {
  if (with_bias) bias = ag::parameter(Tensor({out}));
}

Var Conv1x1::forward(const Var& x) const {
  Var y = ag::pointwise_conv(x, weight);
  return bias ? ag::add_channel_bias(y, bias) : y;
}

void Conv1x1::collect(Registry& reg, const std::string& prefix) const {
  reg.add(prefix + ".w", weight);
  if (bias) reg.add(prefix + ".b", bias);
}

// ---- DscLayer -----------------------------------------------------------------

DscLayer::DscLayer(const ConvSpec& s, bool with_bias, Rng& rng, Init init) : spec(s) {
  spec.validate();
  depthwise = ag::parameter(
      he_uniform(rng, {spec.depth, 1, spec.kernel, spec.kernel}, spec.kernel * spec.kernel, Init::Linear));
  pointwise = ag::parameter(he_uniform(rng, {spec.kernels, spec.depth, 1, 1}, spec.depth, init));
  if (with_bias) bias = ag::parameter(Tensor({spec.kernels}));
}

Var DscLayer::forward(const Var& x) const {
  if (x->value.rank() != 4 || x->value.dim(1) != spec.depth) {
    throw ShapeMismatch("separable conv expects " + std::to_string(spec.depth) + " channels, got " +
                        shape_str(x->value.shape()));
  }
  Var y = ag::depthwise_conv2d(x, depthwise, spec.stride, spec.padding);
  y = ag::pointwise_conv(y, pointwise);
  return bias ? ag::add_channel_bias(y, bias) : y;
}

void DscLayer::collect(Registry& reg, const std::string& prefix, const std::string& suffix) const {
  reg.add(prefix + ".dw" + suffix, depthwise);
  reg.add(prefix + ".pw" + suffix, pointwise);
  if (bias) reg.add(prefix + ".b" + suffix, bias);
}

std::size_t DscLayer::parameter_count() const {
  return depthwise->value.numel() + pointwise->value.numel() + (bias ? bias->value.numel() : 0);
}

// ---- BatchNorm ----------------------------------------------------------------

BatchNorm::BatchNorm(std::size_t channels)
    : gamma(ag::parameter(Tensor({channels}, 1.0))),
      beta(ag::parameter(Tensor({channels}, 0.0))),
      running_mean({channels}, 0.0),
      running_var({channels}, 1.0) {}

Var BatchNorm::forward(const Var& x, Mode mode) {
  if (mode == Mode::Eval) return ag::batch_norm_eval(x, gamma, beta, running_mean, running_var, kEpsilon);
  Tensor mu, var;
  Var y = ag::batch_norm_train(x, gamma, beta, kEpsilon, &mu, &var);
  for (std::size_t c = 0; c < mu.numel(); ++c) {
    running_mean[c] = kMomentum * running_mean[c] + (1.0 - kMomentum) * mu[c];
    running_var[c] = kMomentum * running_var[c] + (1.0 - kMomentum) * var[c];
  }
  return y;
}

void BatchNorm::collect(Registry& reg, const std::string& prefix) {
  reg.add(prefix + ".gamma", gamma);
  reg.add(prefix + ".beta", beta);
  reg.add_buffer(prefix + ".running_mean", &running_mean);
  reg.add_buffer(prefix + ".running_var", &running_var);
}

// ---- HybridPool -----------------------------------------------------------------

HybridPool::HybridPool(std::size_t channels, Padding m, Rng& rng, bool merge_bias)
    : mode(m), merge(2 * channels, channels, merge_bias, rng) {}

std::pair<Var, Var> HybridPool::branches(const Var& x) const {
  const Dims4 d = dims4(x->value);
  if (mode == Padding::Valid) {
    if (d.h % 2 != 0 || d.w % 2 != 0) {
      throw OddSpatialDims("valid hybrid pooling needs even H and W, got " + shape_str(x->value.shape()));
    }
    return {ag::max_pool2d(x, 2, 2, Padding::Valid), ag::spectral_pool(x, d.h / 2, d.w / 2)};
  }
  return {ag::max_pool2d(x, 3, 1, Padding::Same), ag::spectral_lowpass(x)};
}

Var HybridPool::forward(const Var& x) const {
  auto [max_branch, spectral_branch] = branches(x);
  const Var parts[] = {max_branch, spectral_branch};
  return merge.forward(ag::concat_channels(parts));
}

void HybridPool::collect(Registry& reg, const std::string& prefix) const { merge.collect(reg, prefix + ".merge"); }

// ---- InceptionLayer -----------------------------------------------------------

namespace {

ConvSpec branch_spec(std::size_t kernel, std::size_t in, std::size_t out) {
  ConvSpec s;
  s.kernel = kernel;
  s.kernels = out;
  s.depth = in;
  s.stride = 1;
  s.padding = Padding::Same;
  return s;
}

}  // namespace

InceptionLayer::InceptionLayer(std::size_t in, std::size_t out, Rng& rng)
    : branch1(branch_spec(1, in, out), false, rng),
      branch3(branch_spec(3, in, out), false, rng),
      branch5(branch_spec(5, in, out), false, rng),
      pool(in, Padding::Same, rng, false),  // feeds batch norm like the other branches
      bn1(out),
      bn3(out),
      bn5(out),
      bn_pool(in),
      merge(3 * out + in, out, true, rng) {}

Var InceptionLayer::forward(const Var& x, Mode mode) {
  const Var parts[] = {
      bn1.forward(ag::relu(branch1.forward(x)), mode),
      bn3.forward(ag::relu(branch3.forward(x)), mode),
      bn5.forward(ag::relu(branch5.forward(x)), mode),
      bn_pool.forward(ag::relu(pool.forward(x)), mode),
  };
  return merge.forward(ag::concat_channels(parts));
}

void InceptionLayer::collect(Registry& reg, const std::string& prefix) {
  branch1.collect(reg, prefix, "1");
  branch3.collect(reg, prefix, "3");
  branch5.collect(reg, prefix, "5");
  pool.collect(reg, prefix + ".pool");
  bn1.collect(reg, prefix + ".bn1");
  bn3.collect(reg, prefix + ".bn3");
  bn5.collect(reg, prefix + ".bn5");
  bn_pool.collect(reg, prefix + ".bnpool");
  merge.collect(reg, prefix + ".merge");
}

// ---- ResidualInceptionBlock -----------------------------------------------------

ResidualInceptionBlock::ResidualInceptionBlock(std::size_t in, std::size_t out, Rng& rng)
    : inc1(in, out, rng), inc2(out, out, rng), shortcut(branch_spec(1, in, out), true, rng, Init::Linear) {}

Var ResidualInceptionBlock::forward(const Var& x, Mode mode) {
  Var main = inc2.forward(inc1.forward(x, mode), mode);
  return ag::add(main, shortcut.forward(x));
}

void ResidualInceptionBlock::collect(Registry& reg, const std::string& prefix) {
  inc1.collect(reg, prefix + ".inc1");
  inc2.collect(reg, prefix + ".inc2");
  shortcut.collect(reg, prefix + ".short");
}

// ---- CrossSpatialAttention ------------------------------------------------------

CrossSpatialAttention::CrossSpatialAttention(std::size_t skip_channels,
                                             const std::vector<std::size_t>& gate_channels, Rng& rng)
    : proj_skip(skip_channels, skip_channels, true, rng, Init::Relu) {
  if (gate_channels.empty() || gate_channels.size() > 2) {
    throw BadConfig("cross-spatial attention takes one or two gate sources");
  }
  for (auto c : gate_channels) proj_gates.emplace_back(c, skip_channels, true, rng, Init::Relu);
  psi = Conv1x1(skip_channels, 1, true, rng);
}

CrossSpatialAttention::Result CrossSpatialAttention::forward(const Var& skip, const std::vector<Var>& gates) const {
  if (gates.size() != proj_gates.size()) {
    throw ShapeMismatch("attention block built for " + std::to_string(proj_gates.size()) + " gates, got " +
                        std::to_string(gates.size()));
  }
  const Dims4 ds = dims4(skip->value);
  Var acc = proj_skip.forward(skip);
  for (std::size_t i = 0; i < gates.size(); ++i) {
    const Dims4 dg = dims4(gates[i]->value);
    if (dg.n != ds.n || dg.h > ds.h || dg.w > ds.w) {
      throw ShapeMismatch("gate " + shape_str(gates[i]->value.shape()) + " incompatible with skip " +
                          shape_str(skip->value.shape()));
    }
    Var g = proj_gates[i].forward(gates[i]);
    acc = ag::add(acc, ag::resize_bilinear(g, ds.h, ds.w));
  }
  Var alpha = ag::sigmoid(psi.forward(ag::relu(acc)));
  return {ag::mul_channel_broadcast(skip, alpha), alpha};
}

void CrossSpatialAttention::collect(Registry& reg, const std::string& prefix) const {
  proj_skip.collect(reg, prefix + ".proj_skip");
  for (std::size_t i = 0; i < proj_gates.size(); ++i) {
    proj_gates[i].collect(reg, prefix + ".proj_gate" + std::to_string(i + 1));
  }
  psi.collect(reg, prefix + ".psi");
}

// ---- Upsample -----------------------------------------------------------------

Upsample::Upsample(std::size_t in, std::size_t out, Rng& rng)
    : weight(ag::parameter(he_uniform(rng, {in, out, 2, 2}, in, Init::Linear))), bias(ag::parameter(Tensor({out}))) {}

Var Upsample::forward(const Var& x) const { return ag::add_channel_bias(ag::conv_transpose2x2(x, weight), bias); }

void Upsample::collect(Registry& reg, const std::string& prefix) const {
  reg.add(prefix + ".w", weight);
  reg.add(prefix + ".b", bias);
}

}  // namespace rca::nn
