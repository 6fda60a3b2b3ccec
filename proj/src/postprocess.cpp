#include "rcaiunet/postprocess.hpp"

#include <vector>

#include "rcaiunet/errors.hpp"

namespace rca::postprocess {

namespace {

// Visits the 4-connected component of `value` pixels containing `seed`,
// marking `seen` and returning its pixel indices.
std::vector<std::size_t> component(const Mask& m, std::size_t seed, std::uint8_t value, std::vector<std::uint8_t>& seen) {
  std::vector<std::size_t> out{seed};
  seen[seed] = 1;
  for (std::size_t head = 0; head < out.size(); ++head) {
    const std::size_t i = out[head], r = i / m.width, c = i % m.width;
    auto visit = [&](std::size_t j) {
      if (!seen[j] && m.bits[j] == value) {
        seen[j] = 1;
        out.push_back(j);
      }
    };
    if (r > 0) visit(i - m.width);
    if (r + 1 < m.height) visit(i + m.width);
    if (c > 0) visit(i - 1);
    if (c + 1 < m.width) visit(i + 1);
  }
  return out;
}

}  // namespace

Mask threshold(const Plane& prob, double t) {
  if (!(t > 0.0 && t < 1.0)) throw BadConfig("threshold must lie in (0, 1)");
  Mask m(prob.height, prob.width);
  for (std::size_t i = 0; i < prob.values.size(); ++i) m.bits[i] = prob.values[i] > t ? 1 : 0;
  return m;
}

Mask fill_holes(const Mask& mask) {
  Mask out = mask;
  std::vector<std::uint8_t> seen(mask.size(), 0);
  const std::size_t h = mask.height, w = mask.width;
  auto flood = [&](std::size_t r, std::size_t c) {
    const std::size_t i = r * w + c;
    if (!seen[i] && mask.bits[i] == 0) component(mask, i, 0, seen);
  };
  for (std::size_t c = 0; c < w; ++c) {
    flood(0, c);
    flood(h - 1, c);
  }
  for (std::size_t r = 0; r < h; ++r) {
    flood(r, 0);
    flood(r, w - 1);
  }
  for (std::size_t i = 0; i < out.bits.size(); ++i)
    if (out.bits[i] == 0 && !seen[i]) out.bits[i] = 1;
  return out;
}

Mask remove_small_regions(const Mask& mask, double min_area_fraction) {
  if (!(min_area_fraction >= 0.0 && min_area_fraction < 1.0))
    throw BadConfig("min_area_fraction must lie in [0, 1)");
  Mask out = mask;
  const double min_area = min_area_fraction * static_cast<double>(mask.size());
  std::vector<std::uint8_t> seen(mask.size(), 0);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (seen[i] || mask.bits[i] == 0) continue;
    const auto comp = component(mask, i, 1, seen);
    if (static_cast<double>(comp.size()) < min_area)
      for (std::size_t j : comp) out.bits[j] = 0;
  }
  return out;
}

Mask refine(const Plane& prob) {
  return remove_small_regions(fill_holes(threshold(prob, kRefineThreshold)), kMinAreaFraction);
}

}  // namespace rca::postprocess
