#include <gtest/gtest.h>

#include <sstream>

#include "rcaiunet/errors.hpp"
#include "rcaiunet/train.hpp"

using namespace rca;
using ag::Var;
using namespace rca::train;

namespace {

TrainConfig tiny() {
  TrainConfig cfg;
  cfg.model.base_channels = 4;
  cfg.model.input_size = 32;
  cfg.max_epochs = 2;
  cfg.batch_size = 4;
  return cfg;
}

}  // namespace

TEST(Config, ParsesKeyValueText) {
  TrainConfig cfg;
  std::istringstream is("# comment\n\nlr=0.01\nbase_channels = 12\nseed=7\n");
  apply_config_text(cfg, is);
  EXPECT_DOUBLE_EQ(cfg.lr, 0.01);
  EXPECT_EQ(cfg.model.base_channels, 12u);
  EXPECT_EQ(cfg.seed, 7u);
}

TEST(Config, UnknownKeyOrBadValueRejected) {
  TrainConfig cfg;
  EXPECT_THROW(set_field(cfg, "learning_rate", "1"), BadConfig);
  EXPECT_THROW(set_field(cfg, "lr", "fast"), BadConfig);
}

TEST(Config, TextRoundTrip) {
  TrainConfig a = tiny();
  a.lr = 3.3e-4;
  a.val_on_train = true;
  TrainConfig b;
  std::istringstream is(config_text(a));
  apply_config_text(b, is);
  EXPECT_EQ(config_text(a), config_text(b));
}

TEST(Config, ValidateRanges) {
  TrainConfig cfg;
  cfg.lr = -1;
  EXPECT_THROW(validate(cfg), BadConfig);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  EXPECT_THROW(validate(cfg), BadConfig);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  const Var x = ag::parameter(Tensor({2}, std::vector<double>{1.0, -1.0}));
  Adam opt({{"x", x}}, 0.1, 0.9, 0.999, 1e-8);
  opt.step(ag::backward(ag::sum(ag::mul(x, x))));  // grad (2, -2)
  EXPECT_NEAR(x->value[0], 1.0 - 0.1 * 2.0 / (2.0 + 1e-8), 1e-15);
  EXPECT_NEAR(x->value[1], -1.0 + 0.1 * 2.0 / (2.0 + 1e-8), 1e-15);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, SecondStepUsesBiasCorrectedMoments) {
  const Var x = ag::parameter(Tensor({1}, 1.0));
  Adam opt({{"x", x}}, 0.1, 0.9, 0.999, 1e-8);
  double m = 0, v = 0, ref = 1.0;
  for (int t = 1; t <= 2; ++t) {
    const double g = 2 * ref;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    ref -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    opt.step(ag::backward(ag::sum(ag::mul(x, x))));
  }
  EXPECT_NEAR(x->value[0], ref, 1e-14);
}

TEST(Plateau, CutsAfterExactlyPatienceBadEpochs) {
  PlateauScheduler s(1e-3, 0.5, 5, 1e-4);
  EXPECT_FALSE(s.update(1.0));
  for (int i = 0; i < 4; ++i) EXPECT_FALSE(s.update(1.0 - 5e-5));  // below min_delta
  EXPECT_TRUE(s.update(1.0));
  EXPECT_DOUBLE_EQ(s.lr(), 5e-4);
  for (int i = 0; i < 4; ++i) EXPECT_FALSE(s.update(1.0));
  EXPECT_TRUE(s.update(1.0));
  EXPECT_EQ(s.cuts(), 2u);
}

TEST(Plateau, ImprovementResetsCounter) {
  PlateauScheduler s(1e-3, 0.5, 2, 1e-4);
  s.update(1.0);
  s.update(1.0);
  EXPECT_FALSE(s.update(0.5));
  EXPECT_FALSE(s.update(0.5));
  EXPECT_TRUE(s.update(0.5));
}

TEST(EarlyStop, StopsAfterPatience) {
  EarlyStopping e(3, 1e-4);
  EXPECT_FALSE(e.update(1.0));
  EXPECT_FALSE(e.update(2.0));
  EXPECT_FALSE(e.update(2.0));
  EXPECT_TRUE(e.update(2.0));
}

TEST(Fit, DeterministicLogAndLossDecreases) {
  const auto samples = data::generate_synthetic(6, 32, 2);
  const std::vector<data::Sample> tr(samples.begin(), samples.begin() + 4), va(samples.begin() + 4, samples.end());
  TrainConfig cfg = tiny();
  cfg.max_epochs = 6;
  cfg.batch_size = 2;
  model::RcaIUnet a(cfg.model, cfg.seed), b(cfg.model, cfg.seed);
  const TrainResult ra = fit(a, cfg, tr, va), rb = fit(b, cfg, tr, va);
  EXPECT_EQ(log_csv(ra.log), log_csv(rb.log));
  ASSERT_EQ(ra.log.size(), 12u);
  EXPECT_EQ(log_csv(ra.log).rfind("epoch,split,L,L_BC,L_DC,DC,lr\n", 0), 0u);
  EXPECT_LT(ra.log[10].scores.loss, ra.log[0].scores.loss);
  EXPECT_FALSE(ra.diverged);
}
