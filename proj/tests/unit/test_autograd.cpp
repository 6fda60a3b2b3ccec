#include <gtest/gtest.h>

#include <cmath>

#include "rcaiunet/autograd.hpp"
#include "rcaiunet/errors.hpp"
#include "rcaiunet/gradcheck.hpp"
#include "rcaiunet/random.hpp"

using namespace rca;
using ag::Var;

TEST(Autograd, SumOfSquaresMatchesTwoX) {
  Rng rng(1);
  const Var x = ag::parameter(rng.uniform_tensor({3, 4}, -2, 2));
  const Var f = ag::sum(ag::mul(x, x));
  const Tensor g = ag::backward(f)[x];
  for (std::size_t i = 0; i < g.numel(); ++i) EXPECT_NEAR(g[i], 2 * x->value[i], 1e-15);
  const auto rep = ag::gradcheck([&] { return ag::sum(ag::mul(x, x)); }, {{"x", x}});
  EXPECT_LT(rep.max_rel_err(), 1e-8);
}

TEST(Autograd, BackwardIsRepeatable) {
  Rng rng(2);
  const Var x = ag::parameter(rng.uniform_tensor({5}, 0.1, 1));
  const Var f = ag::sum(ag::log(ag::sigmoid(ag::mul(x, x))));
  const ag::Tape tape(f);
  const Tensor a = tape.backward()[x];
  const Tensor b = tape.backward()[x];
  EXPECT_EQ(max_abs_diff(a, b), 0.0);
}

TEST(Autograd, SharedSubexpressionAccumulates) {
  const Var x = ag::parameter(Tensor({1}, 3.0));
  const Var y = ag::add(x, x);
  const Var f = ag::sum(ag::mul(y, x));  // 2x^2
  EXPECT_DOUBLE_EQ(ag::backward(f)[x][0], 12.0);
}

TEST(Autograd, NonScalarRootThrows) {
  const Var x = ag::parameter(Tensor({2}, 1.0));
  EXPECT_THROW(ag::backward(ag::mul(x, x)), NonScalarRoot);
}

TEST(Autograd, NoGradRecordsNothing) {
  const Var x = ag::parameter(Tensor({2}, 1.0));
  ag::NoGradGuard guard;
  const Var y = ag::mul(x, x);
  EXPECT_FALSE(y->requires_grad);
}

TEST(Autograd, UnusedParameterHasZeroGradient) {
  const Var x = ag::parameter(Tensor({2}, 1.0));
  const Var z = ag::parameter(Tensor({3}, 1.0));
  const auto g = ag::backward(ag::sum(x));
  EXPECT_EQ(g[z].numel(), 3u);
  EXPECT_EQ(sum(g[z]), 0.0);
}

TEST(Gradcheck, DetectsWrongGradient) {
  const Var x = ag::parameter(Tensor({3}, std::vector<double>{0.5, 1.0, 2.0}));
  auto f = [&] {
    // true gradient is 2x g
    return ag::sum(ag::make_node(mul(x->value, x->value), {x}, [](const Tensor& g) { return std::vector<Tensor>{g}; }));
  };
  const auto rep = ag::gradcheck(f, {{"x", x}});
  EXPECT_FALSE(rep.pass());
}

TEST(Gradcheck, SkipsCoordinatesAcrossKinks) {
  const Var x = ag::parameter(Tensor({2}, std::vector<double>{1e-7, 0.5}));
  const auto rep = ag::gradcheck([&] { return ag::sum(ag::relu(x)); }, {{"x", x}});
  ASSERT_EQ(rep.records.size(), 1u);
  EXPECT_EQ(rep.records[0].skipped, 1u);
  EXPECT_EQ(rep.records[0].sampled, 1u);
  EXPECT_TRUE(rep.pass());
}

TEST(Gradcheck, ReportFormats) {
  const Var x = ag::parameter(Tensor({2, 2}, 1.0));
  const auto rep = ag::gradcheck([&] { return ag::sum(ag::mul(x, x)); }, {{"x", x}});
  EXPECT_NE(rep.table().find("x"), std::string::npos);
  EXPECT_NE(rep.json_lines().find("\"max_rel_err\""), std::string::npos);
}
