#include <gtest/gtest.h>

#include <numeric>

#include "rcaiunet/errors.hpp"
#include "rcaiunet/kernels.hpp"
#include "rcaiunet/layers.hpp"
#include "rcaiunet/random.hpp"
#include "rcaiunet/suites.hpp"

using namespace rca;
using ag::Var;
using namespace rca::nn;

namespace {

ConvSpec spec(std::size_t f, std::size_t r, std::size_t d) {
  ConvSpec s;
  s.kernel = f;
  s.kernels = r;
  s.depth = d;
  return s;
}

}  // namespace

TEST(CostModel, RatioIsExactReducedFraction) {
  for (std::size_t r = 1; r <= 128; r += 7)
    for (std::size_t f : {1u, 3u, 5u})
      for (std::size_t d = 1; d <= 64; d += 5) {
        // 1/r + 1/f^2 = (f^2 + r) / (r f^2)
        const std::uint64_t num = f * f + r, den = r * f * f, g = std::gcd(num, den);
        const Rational q = separable_cost_ratio(spec(f, r, d));
        EXPECT_EQ(q.num, num / g);
        EXPECT_EQ(q.den, den / g);
      }
}

TEST(CostModel, CountsMatchFormulas) {
  ConvSpec s = spec(3, 8, 4);
  s.input_size = 10;
  const auto sc = cost_model(s, ConvKind::Standard);
  const auto dsc = cost_model(s, ConvKind::DepthwiseSeparable);
  const std::uint64_t p = s.output_size();
  EXPECT_EQ(sc.parameters, 8u * 9 * 4);
  EXPECT_EQ(dsc.parameters, 4u * (9 + 8));
  EXPECT_EQ(sc.multiplications, 8 * p * p * 9 * 4);
  EXPECT_EQ(dsc.multiplications, 4 * p * p * (9 + 8));
}

TEST(CostModel, InvalidKernelRejected) {
  EXPECT_THROW(spec(4, 2, 2).validate(), BadConfig);
}

TEST(DscLayer, EnumeratedParametersMatchCostModel) {
  Rng rng(1);
  for (std::size_t f : {1u, 3u, 5u}) {
    DscLayer layer(spec(f, 6, 5), false, rng);
    Registry reg;
    layer.collect(reg, "l");
    std::size_t n = 0;
    for (const auto& p : reg.params) n += p.var->value.numel();
    EXPECT_EQ(n, 5 * (f * f + 6));
    EXPECT_EQ(n, cost_model(layer.spec, ConvKind::DepthwiseSeparable).parameters);
  }
}

TEST(MaxPool, FirstMaximumWinsTies) {
  Tensor x({1, 1, 2, 2}, 1.0);
  std::vector<std::size_t> arg;
  kernels::max_pool2d(x, 2, 2, kernels::Padding::Valid, &arg);
  ASSERT_EQ(arg.size(), 1u);
  EXPECT_EQ(arg[0], 0u);
}

TEST(HybridPool, ValidModeNeedsEvenDims) {
  Rng rng(2);
  HybridPool pool(1, Padding::Valid, rng);
  EXPECT_THROW(pool.forward(ag::constant(Tensor({1, 1, 5, 4}))), OddSpatialDims);
  EXPECT_EQ(pool.forward(ag::constant(Tensor({1, 1, 6, 4})))->value.shape(), (Shape{1, 1, 3, 2}));
}

TEST(HybridPool, SameModeKeepsSize) {
  Rng rng(3);
  HybridPool pool(2, Padding::Same, rng);
  EXPECT_EQ(pool.forward(ag::constant(Tensor({1, 2, 7, 9})))->value.shape(), (Shape{1, 2, 7, 9}));
}

TEST(CrossSpatialAttention, GateBoundsHold) {
  Rng rng(4);
  CrossSpatialAttention csa(3, {4, 5}, rng);
  const Var skip = ag::constant(rng.uniform_tensor({2, 3, 8, 8}, -2, 2));
  const Var g1 = ag::constant(rng.uniform_tensor({2, 4, 4, 4}, -2, 2));
  const Var g2 = ag::constant(rng.uniform_tensor({2, 5, 2, 2}, -2, 2));
  const auto r = csa.forward(skip, {g1, g2});
  for (double a : r.alpha->value.data()) {
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
  }
  for (std::size_t i = 0; i < skip->value.numel(); ++i)
    EXPECT_LE(std::abs(r.output->value[i]), std::abs(skip->value[i]));
}

TEST(Upsample, DoublesSpatialSize) {
  Rng rng(5);
  Upsample up(4, 2, rng);
  EXPECT_EQ(up.forward(ag::constant(Tensor({1, 4, 3, 5})))->value.shape(), (Shape{1, 2, 6, 10}));
}

TEST(BatchNorm, EvalUsesRunningStatistics) {
  BatchNorm bn(1);
  const Var x = ag::constant(Tensor({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4}));
  const Tensor y = bn.forward(x, Mode::Eval)->value;  // running mean 0, var 1
  EXPECT_NEAR(y[3], 4.0 / std::sqrt(1.0 + BatchNorm::kEpsilon), 1e-12);
}

TEST(Gradcheck, EveryLayerTypePassesSeedZero) {
  for (const auto& run : suites::layer_gradchecks(0)) EXPECT_TRUE(run.report.pass()) << run.name << "\n" << run.report.table();
}
