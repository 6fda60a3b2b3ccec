#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "rcaiunet/tensor.hpp"

namespace rca {

/// Row-major grayscale plane, typically intensities or probabilities in [0, 1].
struct Plane {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  Plane() = default;
  Plane(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), values(h * w, fill) {}

  std::size_t size() const { return values.size(); }
  double& operator()(std::size_t r, std::size_t c) { return values[r * width + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * width + c]; }
};

/// Row-major binary mask; every entry is 0 or 1.
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), bits(h * w, fill) {}

  std::size_t size() const { return bits.size(); }
  std::size_t count() const;
  std::uint8_t& operator()(std::size_t r, std::size_t c) { return bits[r * width + c]; }
  std::uint8_t operator()(std::size_t r, std::size_t c) const { return bits[r * width + c]; }
  bool operator==(const Mask& other) const = default;
};

/// [1, 1, H, W] tensor view of a plane.
Tensor to_tensor(const Plane& p);
Tensor to_tensor(const Mask& m);
/// Plane from the last two dims of a tensor holding exactly one image.
Plane plane_from(const Tensor& t);
/// Mask value as a 0/1 plane.
Plane as_plane(const Mask& m);

}  // namespace rca
