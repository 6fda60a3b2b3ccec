#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "rcaiunet/errors.hpp"

namespace rca {

using Shape = std::vector<std::size_t>;

/// Storage precision tag. Arithmetic is always carried out in double; an F32
/// tensor has every element rounded to the nearest float after each op.
enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major real tensor. 4-D tensors use NCHW layout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0, DType dtype = DType::F64);
  Tensor(Shape shape, std::vector<double> data, DType dtype = DType::F64);

  static Tensor scalar(double v);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape(), 0.0, t.dtype()); }

  /// False only for a default-constructed tensor.
  bool defined() const { return !shape_.empty(); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const { return data_.size(); }
  DType dtype() const { return dtype_; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }
  std::vector<double>& storage() { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  /// Value of a single-element tensor.
  double item() const;

  Tensor astype(DType dtype) const&;
  Tensor astype(DType dtype) &&;
  Tensor reshape(Shape shape) const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  /// Re-applies the dtype rounding rule in place.
  void round_to_dtype();

 private:
  Shape shape_;
  std::vector<double> data_;
  DType dtype_ = DType::F64;
};

/// Real and imaginary planes sharing one shape.
struct ComplexTensor {
  Shape shape;
  std::vector<double> re;
  std::vector<double> im;

  ComplexTensor() = default;
  explicit ComplexTensor(Shape s)
      : shape(std::move(s)), re(shape_numel(shape), 0.0), im(shape_numel(shape), 0.0) {}

  std::size_t numel() const { return re.size(); }
};

/// Batch/channel/height/width view of a rank-4 tensor.
struct Dims4 {
  std::size_t n, c, h, w;
  std::size_t plane() const { return h * w; }
};

Dims4 dims4(const Tensor& t);
Dims4 dims4(const Shape& s);

// Elementwise suite. Binary operations require identical shapes; the scalar
// overloads broadcast a single value.
Tensor add(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double s);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
double sigmoid(double x);
double sum(const Tensor& a);
double mean(const Tensor& a);
double max_reduce(const Tensor& a);

double dot(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Zero (or constant) padding of the two trailing spatial dims.
Tensor pad2d(const Tensor& x, std::size_t top, std::size_t bottom, std::size_t left,
             std::size_t right, double value = 0.0);

/// Concatenates rank-4 tensors along the channel axis.
Tensor concat_channels(std::span<const Tensor> parts);

/// Splits a rank-4 tensor along channels into consecutive chunks of the given sizes.
std::vector<Tensor> split_channels(const Tensor& x, std::span<const std::size_t> sizes);

/// Bilinear resampling of the two trailing dims with half-pixel centres.
Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w);

/// Adjoint of resize_bilinear: scatters an output gradient back onto the input grid.
Tensor resize_bilinear_backward(const Tensor& grad, std::size_t in_h, std::size_t in_w);

/// Nearest-neighbour resampling of the two trailing dims (half-pixel centres).
Tensor resize_nearest(const Tensor& x, std::size_t out_h, std::size_t out_w);

}  // namespace rca
