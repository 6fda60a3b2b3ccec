#include <gtest/gtest.h>

#include <sstream>

#include "rcaiunet/errors.hpp"
#include "rcaiunet/model.hpp"
#include "rcaiunet/random.hpp"

using namespace rca;
using namespace rca::model;

namespace {

ModelConfig small(std::size_t c1 = 4, std::size_t size = 32) {
  ModelConfig c;
  c.base_channels = c1;
  c.input_size = size;
  return c;
}

}  // namespace

TEST(ModelConfig, ChannelWidthsGrowGeometrically) {
  ModelConfig c;
  c.base_channels = 40;
  EXPECT_EQ(c.channels(1), 40u);
  EXPECT_EQ(c.channels(2), 60u);
  EXPECT_EQ(c.channels(3), 90u);
  EXPECT_EQ(c.channels(4), 135u);
  EXPECT_EQ(c.channels(5), 203u);  // round(202.5)
}

TEST(ModelConfig, GateLevels) {
  ModelConfig c;
  EXPECT_EQ(c.gate_levels(1), (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(c.gate_levels(3), (std::vector<std::size_t>{4, 5}));
  EXPECT_EQ(c.gate_levels(4), (std::vector<std::size_t>{5}));
}

TEST(ModelConfig, RejectsIndivisibleInput) {
  ModelConfig c = small(4, 36);
  EXPECT_THROW(c.validate(), BadConfig);
  EXPECT_THROW(RcaIUnet(c, 0), BadConfig);
}

TEST(ModelConfig, JsonRoundTrip) {
  const ModelConfig c = small(6, 64);
  const ModelConfig d = ModelConfig::from_json(c.to_json());
  EXPECT_EQ(d.base_channels, 6u);
  EXPECT_EQ(d.input_size, 64u);
  EXPECT_EQ(d.growth, c.growth);
}

TEST(Model, OutputShapeAndRange) {
  RcaIUnet net(small(), 1);
  Rng rng(2);
  const Tensor y = net.predict(rng.uniform_tensor({2, 1, 32, 32}, 0, 1));
  EXPECT_EQ(y.shape(), (Shape{2, 1, 32, 32}));
  for (double v : y.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Model, ParamTableSumsToTotal) {
  RcaIUnet net(small(), 3);
  std::size_t sum = 0;
  for (const auto& row : net.param_table()) {
    EXPECT_EQ(row.count, shape_numel(row.shape));
    sum += row.count;
  }
  EXPECT_EQ(sum, net.param_count());
  EXPECT_EQ(count_parameters(small()), net.param_count());
}

TEST(Model, SameSeedSameWeights) {
  RcaIUnet a(small(), 9), b(small(), 9), c(small(), 10);
  bool differs = false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    const auto& va = a.parameters()[i].var->value;
    EXPECT_EQ(va.data()[0], b.parameters()[i].var->value.data()[0]);
    differs |= va.data()[0] != c.parameters()[i].var->value.data()[0];
  }
  EXPECT_TRUE(differs);
}

TEST(Model, SaveLoadRoundTrip) {
  RcaIUnet net(small(), 4);
  Rng rng(5);
  const Tensor x = rng.uniform_tensor({1, 1, 32, 32}, 0, 1);
  net.forward(ag::constant(x), Mode::Train);  // move running statistics
  std::stringstream ss;
  net.save(ss);
  RcaIUnet back = RcaIUnet::load(ss);
  const Tensor a = net.predict(x), b = back.predict(x);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Model, TruncatedArchiveRejected) {
  RcaIUnet net(small(), 4);
  std::stringstream ss;
  net.save(ss);
  std::string bytes = ss.str();
  std::stringstream cut(bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(RcaIUnet::load(cut), FormatError);
}

TEST(Model, StagedRunMatchesFullForward) {
  RcaIUnet net(small(), 6);
  Rng rng(7);
  const Tensor x = rng.uniform_tensor({1, 1, 32, 32}, 0, 1);
  ag::NoGradGuard guard;
  const Tensor full = net.forward(ag::constant(x), Mode::Train)->value;
  RcaIUnet::ForwardState st;
  st.level.resize(6);
  st.pooled.resize(5);
  st.decoded.resize(6);
  st.pooled[0] = ag::constant(x);
  net.run_stages(st, 0, Mode::Train);
  auto copy = st;
  net.run_stages(copy, net.stage_count() - 3, Mode::Train);
  for (std::size_t i = 0; i < full.numel(); ++i) {
    EXPECT_EQ(full[i], st.output->value[i]);
    EXPECT_EQ(full[i], copy.output->value[i]);
  }
}

TEST(Model, CalibratedDefaultCount) {
  const std::size_t n = count_parameters(ModelConfig{});
  EXPECT_EQ(n, 2'563'209u);
  EXPECT_GE(n, 2'400'000u);
  EXPECT_LE(n, 3'400'000u);
}

TEST(Model, CalibrationNonPositiveTarget) {
  const Calibration c = calibrate_width(0, small(4, 32));
  EXPECT_EQ(c.base_channels, 8u);
}
