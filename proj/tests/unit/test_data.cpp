#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "rcaiunet/data.hpp"
#include "rcaiunet/errors.hpp"

using namespace rca;
using namespace rca::data;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("rcaiunet_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<Sample> dummy(std::size_t n) {
  std::vector<Sample> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i].id = "s" + std::to_string(1000 + i);
  return s;
}

}  // namespace

TEST(Png, RoundTripIsWithinQuantisation) {
  TempDir dir("png");
  Plane p(7, 5);
  for (std::size_t i = 0; i < p.size(); ++i) p.values[i] = double(i) / double(p.size());
  write_png(dir.path / "a.png", p);
  const Plane q = read_png(dir.path / "a.png");
  ASSERT_EQ(q.height, 7u);
  ASSERT_EQ(q.width, 5u);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(q.values[i], p.values[i], 0.5 / 255 + 1e-12);
}

TEST(Png, MaskRoundTrip) {
  TempDir dir("maskpng");
  Mask m(4, 6);
  m(1, 2) = m(3, 5) = 1;
  write_mask_png(dir.path / "m.png", m);
  EXPECT_EQ(read_mask_png(dir.path / "m.png"), m);
}

TEST(Png, Errors) {
  TempDir dir("pngerr");
  EXPECT_THROW(read_png(dir.path / "missing.png"), IoError);
  std::ofstream(dir.path / "bad.png") << "not a png";
  EXPECT_THROW(read_png(dir.path / "bad.png"), CorruptImage);
}

TEST(Preprocess, ConstantImageMapsToZero) {
  for (double v : normalize_minmax(Plane(3, 3, 0.7)).values) EXPECT_EQ(v, 0.0);
}

TEST(Preprocess, MinMaxSpansUnitInterval) {
  Plane p(1, 3);
  p.values = {0.2, 0.4, 0.6};
  const Plane q = normalize_minmax(p);
  EXPECT_DOUBLE_EQ(q.values[0], 0.0);
  EXPECT_DOUBLE_EQ(q.values[1], 0.5);
  EXPECT_DOUBLE_EQ(q.values[2], 1.0);
}

TEST(Preprocess, ResizeKeepsMaskBinaryAndConstantsExact) {
  const Plane r = resize_bilinear(Plane(300, 400, 0.25), 256, 256);
  EXPECT_EQ(r.height, 256u);
  for (double v : r.values) EXPECT_DOUBLE_EQ(v, 0.25);
  Mask m(300, 400);
  for (std::size_t i = 0; i < m.size(); i += 3) m.bits[i] = 1;
  const Mask n = resize_nearest(m, 256, 256);
  EXPECT_EQ(n.width, 256u);
  for (auto b : n.bits) EXPECT_TRUE(b == 0 || b == 1);
}

TEST(Dataset, MaskFileNames) {
  EXPECT_TRUE(is_mask_file("a_mask.png"));
  EXPECT_TRUE(is_mask_file("a_mask_2.png"));
  EXPECT_FALSE(is_mask_file("a.png"));
  EXPECT_FALSE(is_mask_file("a_mask_x.png"));
}

TEST(Dataset, LoadsPairsAndReportsMissingMasks) {
  TempDir dir("load");
  const auto samples = generate_synthetic(3, 32, 1);
  write_dataset(dir.path, samples);
  write_png(dir.path / "orphan.png", Plane(10, 10, 0.5));
  const LoadResult r = load_dataset(dir.path, 32);
  ASSERT_EQ(r.samples.size(), 3u);
  EXPECT_EQ(r.samples[0].id, samples[0].id);
  EXPECT_EQ(r.samples[1].mask, samples[1].mask);
  ASSERT_EQ(r.issues.size(), 1u);
  EXPECT_EQ(r.issues[0].kind, "MissingMask");
  EXPECT_THROW(load_dataset(dir.path / "nope"), IoError);
}

TEST(Split, SizesFollowFractions) {
  const Split s = split(dummy(100), {});
  EXPECT_EQ(s.test.size(), 30u);
  EXPECT_EQ(s.val.size(), 21u);
  EXPECT_EQ(s.train.size(), 49u);
  std::set<std::string> ids;
  for (const auto* part : {&s.train, &s.val, &s.test})
    for (const auto& x : *part) ids.insert(x.id);
  EXPECT_EQ(ids.size(), 100u);
}

TEST(Split, MinimumSizes) {
  const Split s = split(dummy(3), {});
  EXPECT_EQ(s.train.size(), 1u);
  EXPECT_EQ(s.val.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
  EXPECT_THROW(split(dummy(2), {}), TooFewSamples);
}

TEST(Split, DependsOnSeedNotInputOrder) {
  auto a = dummy(20), b = a;
  std::reverse(b.begin(), b.end());
  SplitSpec spec;
  spec.seed = 5;
  const Split x = split(a, spec), y = split(b, spec);
  for (std::size_t i = 0; i < x.test.size(); ++i) EXPECT_EQ(x.test[i].id, y.test[i].id);
}

TEST(Synthetic, DeterministicAndWithinCoverage) {
  const auto a = generate_synthetic(20, 64, 3), b = generate_synthetic(20, 64, 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].mask, b[i].mask);
    EXPECT_EQ(a[i].image.values, b[i].image.values);
    const double f = double(a[i].mask.count()) / double(a[i].mask.size());
    EXPECT_GE(f, 0.005);
    EXPECT_LE(f, 0.4);
  }
  EXPECT_EQ(synthetic_sample(7, 64, 3).mask, a[7].mask);
  EXPECT_THROW(generate_synthetic(1, 16, 0), BadConfig);
}

TEST(Synthetic, LesionIsDarkerThanBackground) {
  for (const auto& s : generate_synthetic(10, 64, 8)) {
    double in = 0, out = 0;
    for (std::size_t i = 0; i < s.mask.size(); ++i) (s.mask.bits[i] ? in : out) += s.image.values[i];
    const double n_in = double(s.mask.count());
    EXPECT_LT(in / n_in, out / (double(s.mask.size()) - n_in));
  }
}
