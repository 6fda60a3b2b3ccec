#include <gtest/gtest.h>

#include <sstream>

#include "rcaiunet/errors.hpp"
#include "rcaiunet/random.hpp"
#include "rcaiunet/rten.hpp"
#include "rcaiunet/tensor.hpp"

using namespace rca;

TEST(Tensor, ShapeAndFill) {
  Tensor t({2, 3, 4, 5}, 1.5);
  EXPECT_EQ(t.numel(), 120u);
  EXPECT_EQ(t.rank(), 4u);
  EXPECT_DOUBLE_EQ(t.at(1, 2, 3, 4), 1.5);
}

TEST(Tensor, F32TagRoundsValues) {
  Tensor t({1}, 0.1, DType::F32);
  EXPECT_EQ(t[0], static_cast<double>(0.1f));
  EXPECT_EQ(t.astype(DType::F64)[0], static_cast<double>(0.1f));
}

TEST(Tensor, ElementwiseShapeMismatchThrows) {
  EXPECT_THROW(add(Tensor({2, 2}), Tensor({2, 3})), ShapeMismatch);
}

TEST(Rten, RoundTripBothDtypes) {
  Rng rng(3);
  for (DType dt : {DType::F32, DType::F64}) {
    const Tensor t = rng.uniform_tensor({2, 3, 5}, -1, 1).astype(dt);
    std::stringstream ss;
    write_rten(ss, t);
    const Tensor back = read_rten(ss);
    EXPECT_EQ(back.shape(), t.shape());
    EXPECT_EQ(back.dtype(), dt);
    EXPECT_EQ(max_abs_diff(back, t), 0.0);
  }
}

TEST(Rten, RejectsBadMagic) {
  std::stringstream ss("XXXX\x01\x01\x01");
  EXPECT_THROW(read_rten(ss), FormatError);
}

TEST(Rten, NamedArchiveRoundTrip) {
  std::stringstream ss;
  write_named(ss, "a", Tensor({2}, 1.0));
  write_named(ss, "b.c", Tensor({1, 1}, 2.0));
  const auto all = read_named_all(ss);
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[1].first, "b.c");
  EXPECT_EQ(all[1].second[0], 2.0);
}

TEST(Rng, StreamsAreDeterministicAndDistinct) {
  Rng a(7, 1), b(7, 1), c(7, 2);
  const auto x = a.next_u64();
  EXPECT_EQ(x, b.next_u64());
  EXPECT_NE(x, c.next_u64());
}
