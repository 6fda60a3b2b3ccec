#include "rcaiunet/image.hpp"

#include <algorithm>

#include "rcaiunet/errors.hpp"

namespace rca {

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

Tensor to_tensor(const Plane& p) { return Tensor({1, 1, p.height, p.width}, p.values); }

Tensor to_tensor(const Mask& m) { return to_tensor(as_plane(m)); }

Plane plane_from(const Tensor& t) {
  if (t.rank() < 2) throw ShapeMismatch("plane_from: tensor rank below 2");
  const std::size_t h = t.dim(t.rank() - 2), w = t.dim(t.rank() - 1);
  if (t.numel() != h * w) throw ShapeMismatch("plane_from: tensor holds more than one image");
  Plane p(h, w);
  std::copy(t.data().begin(), t.data().end(), p.values.begin());
  return p;
}

Plane as_plane(const Mask& m) {
  Plane p(m.height, m.width);
  std::transform(m.bits.begin(), m.bits.end(), p.values.begin(), [](std::uint8_t b) { return double(b); });
  return p;
}

}  // namespace rca
