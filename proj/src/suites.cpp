#include "rcaiunet/suites.hpp"

#include <chrono>
#include <cmath>
#include <functional>

#include "rcaiunet/layers.hpp"
#include "rcaiunet/model.hpp"
#include "rcaiunet/random.hpp"

namespace rca::suites {

namespace {

using ag::Var;
using nn::Mode;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

CheckRun run_layer(const std::string& name, std::uint64_t seed, const std::function<Var()>& forward,
                   const nn::Registry& reg, const ag::GradcheckOptions& base) {
  const auto t0 = Clock::now();
  Tensor weights;
  {
    ag::NoGradGuard guard;
    Rng r(seed, 99);
    weights = r.uniform_tensor(forward()->value.shape(), -1.0, 1.0);
  }
  const Var w = ag::constant(weights);
  ag::GradcheckOptions o = base;
  o.seed = seed;
  CheckRun run{name, seed, ag::gradcheck([&] { return ag::sum(ag::mul(forward(), w)); }, reg.params, o), 0.0};
  run.seconds = seconds_since(t0);
  return run;
}

}  // namespace

std::vector<CheckRun> layer_gradchecks(std::uint64_t seed, const ag::GradcheckOptions& base) {
  std::vector<CheckRun> runs;
  Rng rng(seed);
  const Var x = ag::parameter(rng.uniform_tensor({2, 2, 8, 8}, -1.0, 1.0));
  auto registry = [&](auto& layer, const std::string& prefix) {
    nn::Registry reg;
    layer.collect(reg, prefix);
    reg.add("x", x);
    return reg;
  };

  {
    nn::Conv1x1 conv(2, 3, true, rng);
    runs.push_back(run_layer("conv1x1", seed, [&] { return conv.forward(x); }, registry(conv, "conv"), base));
  }
  for (std::size_t f : {1, 3, 5}) {
    nn::ConvSpec spec;
    spec.kernel = f;
    spec.kernels = 3;
    spec.depth = 2;
    nn::DscLayer dsc(spec, true, rng);
    runs.push_back(run_layer("dsc" + std::to_string(f), seed, [&] { return dsc.forward(x); },
                             registry(dsc, "dsc"), base));
  }
  {
    nn::BatchNorm bn(2);
    runs.push_back(run_layer("batchnorm", seed, [&] { return bn.forward(x, Mode::Train); }, registry(bn, "bn"), base));
  }
  {
    nn::HybridPool pool(2, nn::Padding::Valid, rng);
    runs.push_back(run_layer("hybridpool_valid", seed, [&] { return pool.forward(x); }, registry(pool, "pool"), base));
  }
  {
    nn::HybridPool pool(2, nn::Padding::Same, rng);
    runs.push_back(run_layer("hybridpool_same", seed, [&] { return pool.forward(x); }, registry(pool, "pool"), base));
  }
  {
    nn::InceptionLayer inc(2, 3, rng);
    runs.push_back(
        run_layer("inception", seed, [&] { return inc.forward(x, Mode::Train); }, registry(inc, "inc"), base));
  }
  {
    nn::ResidualInceptionBlock block(2, 3, rng);
    runs.push_back(run_layer("residual_inception", seed, [&] { return block.forward(x, Mode::Train); },
                             registry(block, "block"), base));
  }
  {
    const Var g1 = ag::parameter(rng.uniform_tensor({2, 3, 4, 4}, -1.0, 1.0));
    const Var g2 = ag::parameter(rng.uniform_tensor({2, 4, 2, 2}, -1.0, 1.0));
    nn::CrossSpatialAttention csa(2, {3, 4}, rng);
    nn::Registry reg = registry(csa, "csa");
    reg.add("gate1", g1);
    reg.add("gate2", g2);
    runs.push_back(run_layer("cross_spatial_attention", seed, [&] { return csa.forward(x, {g1, g2}).output; }, reg,
                             base));
  }
  {
    nn::Upsample up(2, 3, rng);
    runs.push_back(run_layer("upsample", seed, [&] { return up.forward(x); }, registry(up, "up"), base));
  }
  return runs;
}

CheckRun model_gradcheck(std::uint64_t seed, const ag::GradcheckOptions& base, std::size_t base_channels,
                         std::size_t size) {
  const auto t0 = Clock::now();
  model::ModelConfig cfg;
  cfg.base_channels = base_channels;
  cfg.input_size = size;
  model::RcaIUnet net(cfg, seed);
  Rng r(seed, 7);
  const Tensor x = r.uniform_tensor({1, 1, size, size}, 0.0, 1.0);
  Tensor y({1, 1, size, size});
  for (double& v : y.data()) v = r.uniform() < 0.3 ? 1.0 : 0.0;

  const std::size_t stages = cfg.stages;
  model::RcaIUnet::ForwardState clean;
  {
    ag::NoGradGuard guard;
    clean.level.resize(stages + 2);
    clean.pooled.resize(stages + 1);
    clean.decoded.resize(stages + 2);
    clean.pooled[0] = ag::constant(x);
    net.run_stages(clean, 0, Mode::Train);
  }
  std::vector<std::size_t> first_stage;
  for (const auto& p : net.parameters()) first_stage.push_back(net.stage_of(p.name));

  ag::GradcheckOptions o = base;
  o.seed = seed;
  auto full = [&] { return loss::combined(net.forward(ag::constant(x), Mode::Train), y); };
  auto staged = [&](std::size_t i) {
    auto state = clean;
    net.run_stages(state, first_stage[i], Mode::Train);
    return loss::combined(state.output, y)->value.item();
  };
  CheckRun run{"model", seed, ag::gradcheck(full, net.parameters(), staged, o), 0.0};
  run.seconds = seconds_since(t0);
  return run;
}

bool LossChecks::pass(double identity_tol, double bce_tol, double numeric_tol) const {
  return split_identity_err <= identity_tol && bce_closed_form_err <= bce_tol && autograd_vs_numeric < numeric_tol &&
         combined_linearity_err <= identity_tol && !dice_table.empty();
}

LossChecks loss_checks(std::uint64_t seed) {
  LossChecks out;
  Rng rng(seed, 0x6c6f7373ULL);
  Tensor y({1, 1, 4, 4}), p({1, 1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) {
    y[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    p[i] = rng.uniform(0.05, 0.95);
  }

  const Var pv = ag::parameter(p);
  const Var total = loss::combined(pv, y);
  out.split_identity_err = std::abs(total->value.item() - 0.5 * (loss::bce_mean(y, p) + loss::dice_loss(y, p)));

  const Tensor g_bce_sum = ag::backward(loss::bce(pv, y, false))[pv];
  for (std::size_t i = 0; i < 16; ++i) {
    const double closed = (p[i] - y[i]) / (p[i] * (1.0 - p[i]));
    out.bce_closed_form_err =
        std::max(out.bce_closed_form_err, std::abs(g_bce_sum[i] - closed) / std::max(1.0, std::abs(closed)));
  }

  const Tensor g_total = ag::backward(total)[pv];
  const Tensor g_bce = ag::backward(loss::bce(pv, y, true))[pv];
  const Tensor g_dice = ag::backward(loss::dice(pv, y))[pv];
  for (std::size_t i = 0; i < 16; ++i)
    out.combined_linearity_err =
        std::max(out.combined_linearity_err, std::abs(g_total[i] - 0.5 * (g_bce[i] + g_dice[i])));

  ag::GradcheckOptions o;
  o.seed = seed;
  out.autograd_vs_numeric = ag::gradcheck([&] { return loss::combined(pv, y); }, {{"p", pv}}, o).max_rel_err();

  out.dice_table = loss::dice_gradient_table(y, p);
  out.dice_table_text = loss::format_dice_gradient_table(out.dice_table);
  for (const auto& row : out.dice_table)
    out.reference_max_abs_gap = std::max(out.reference_max_abs_gap, std::abs(row.reference - row.numeric));
  return out;
}

}  // namespace rca::suites
