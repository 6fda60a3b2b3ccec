#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rcaiunet/errors.hpp"
#include "rcaiunet/postprocess.hpp"

using namespace rca;
using namespace rca::postprocess;

namespace {

Mask ring(std::size_t n, std::size_t lo, std::size_t hi) {
  Mask m(n, n);
  for (std::size_t r = lo; r <= hi; ++r)
    for (std::size_t c = lo; c <= hi; ++c)
      if (r == lo || r == hi || c == lo || c == hi) m(r, c) = 1;
  return m;
}

}  // namespace

TEST(Postprocess, RingHoleIsFilled) {
  const Mask filled = fill_holes(ring(12, 2, 9));
  for (std::size_t r = 2; r <= 9; ++r)
    for (std::size_t c = 2; c <= 9; ++c) EXPECT_EQ(filled(r, c), 1);
  EXPECT_EQ(filled.count(), 64u);
}

TEST(Postprocess, BorderTouchingBackgroundStays) {
  Mask m(6, 6);
  for (std::size_t r = 0; r < 6; ++r) m(r, 2) = 1;  // splits the frame but encloses nothing
  EXPECT_EQ(fill_holes(m), m);
}

TEST(Postprocess, SpeckIsRemoved) {
  Mask m(100, 100);
  for (std::size_t r = 10; r < 40; ++r)
    for (std::size_t c = 10; c < 40; ++c) m(r, c) = 1;
  m(80, 80) = 1;  // 1 pixel < 0.001 * 10000
  const Mask out = remove_small_regions(m);
  EXPECT_EQ(out(80, 80), 0);
  EXPECT_EQ(out.count(), 900u);
}

TEST(Postprocess, AreaAtThresholdIsKept) {
  Mask m(100, 100);
  for (std::size_t c = 0; c < 10; ++c) m(50, c) = 1;  // exactly 10 = 0.001 * 10000
  EXPECT_EQ(remove_small_regions(m).count(), 10u);
}

TEST(Postprocess, BadArguments) {
  EXPECT_THROW(threshold(Plane(2, 2), 0.0), BadConfig);
  EXPECT_THROW(threshold(Plane(2, 2), 1.0), BadConfig);
  EXPECT_THROW(remove_small_regions(Mask(2, 2), 1.0), BadConfig);
}

TEST(Postprocess, MatchesComponentOracles) {
  Rng rng(3);
  for (int k = 0; k < 100; ++k) {
    const Mask m = oracle::random_mask(rng, 20, 24, 0.5);
    EXPECT_EQ(fill_holes(m), oracle::fill_holes(m));
    EXPECT_EQ(remove_small_regions(m, 0.01), oracle::remove_small(m, 0.01));
  }
}

TEST(Postprocess, RefineIsIdempotentAndOrdered) {
  Rng rng(4);
  for (int k = 0; k < 50; ++k) {
    Plane prob(32, 32);
    for (double& v : prob.values) v = rng.uniform();
    const Mask once = refine(prob);
    EXPECT_EQ(refine(as_plane(once)), once);
    const Mask t = threshold(prob, kRefineThreshold);
    const Mask f = fill_holes(t);
    for (std::size_t i = 0; i < t.size(); ++i) {
      EXPECT_GE(f.bits[i], t.bits[i]);     // filling only adds
      EXPECT_LE(once.bits[i], f.bits[i]);  // removal only erases
    }
  }
}
