#include "rcaiunet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace rca {

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeMismatch(std::string(op) + ": " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
  }
}

DType join(DType a, DType b) { return (a == DType::F32 && b == DType::F32) ? DType::F32 : DType::F64; }

template <typename F>
Tensor map_unary(const Tensor& a, F&& f) {
  Tensor out(a.shape(), 0.0, a.dtype());
  const double* x = a.ptr();
  double* y = out.ptr();
  for (std::size_t i = 0; i < a.numel(); ++i) y[i] = f(x[i]);
  out.round_to_dtype();
  return out;
}

template <typename F>
Tensor map_binary(const Tensor& a, const Tensor& b, const char* op, F&& f) {
  require_same(a, b, op);
  Tensor out(a.shape(), 0.0, join(a.dtype(), b.dtype()));
  const double* x = a.ptr();
  const double* z = b.ptr();
  double* y = out.ptr();
  for (std::size_t i = 0; i < a.numel(); ++i) y[i] = f(x[i], z[i]);
  out.round_to_dtype();
  return out;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill, DType dtype)
    : shape_(std::move(shape)), dtype_(dtype) {
  if (shape_.empty()) throw ShapeMismatch("tensor shape must have at least one dimension");
  for (auto d : shape_) {
    if (d == 0) throw ShapeMismatch("tensor dimensions must be >= 1: " + shape_str(shape_));
  }
  data_.assign(shape_numel(shape_), fill);
  round_to_dtype();
}

Tensor::Tensor(Shape shape, std::vector<double> data, DType dtype)
    : shape_(std::move(shape)), data_(std::move(data)), dtype_(dtype) {
  if (shape_.empty()) throw ShapeMismatch("tensor shape must have at least one dimension");
  for (auto d : shape_) {
    if (d == 0) throw ShapeMismatch("tensor dimensions must be >= 1: " + shape_str(shape_));
  }
  if (shape_numel(shape_) != data_.size()) {
    throw ShapeMismatch("data length " + std::to_string(data_.size()) + " does not match shape " +
                        shape_str(shape_));
  }
  round_to_dtype();
}

Tensor Tensor::scalar(double v) { return Tensor({1}, v); }

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeMismatch("item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

Tensor Tensor::astype(DType dtype) const& {
  Tensor out = *this;
  return std::move(out).astype(dtype);
}

Tensor Tensor::astype(DType dtype) && {
  dtype_ = dtype;
  round_to_dtype();
  return std::move(*this);
}

Tensor Tensor::reshape(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw ShapeMismatch("reshape " + shape_str(shape_) + " -> " + shape_str(shape));
  }
  return Tensor(std::move(shape), data_, dtype_);
}

void Tensor::round_to_dtype() {
  if (dtype_ != DType::F32) return;
  for (auto& v : data_) v = static_cast<double>(static_cast<float>(v));
}

Dims4 dims4(const Shape& s) {
  if (s.size() != 4) throw ShapeMismatch("expected NCHW tensor, got " + shape_str(s));
  return {s[0], s[1], s[2], s[3]};
}

Dims4 dims4(const Tensor& t) { return dims4(t.shape()); }

Tensor add(const Tensor& a, const Tensor& b) {
  return map_binary(a, b, "add", [](double x, double y) { return x + y; });
}
Tensor add(const Tensor& a, double s) {
  return map_unary(a, [s](double x) { return x + s; });
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return map_binary(a, b, "sub", [](double x, double y) { return x - y; });
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return map_binary(a, b, "mul", [](double x, double y) { return x * y; });
}
Tensor scale(const Tensor& a, double s) {
  return map_unary(a, [s](double x) { return x * s; });
}
Tensor relu(const Tensor& a) {
  return map_unary(a, [](double x) { return x > 0.0 ? x : 0.0; });
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& a) {
  return map_unary(a, [](double x) { return sigmoid(x); });
}
Tensor clamp(const Tensor& a, double lo, double hi) {
  return map_unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); });
}

double sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return s;
}

double mean(const Tensor& a) { return sum(a) / static_cast<double>(a.numel()); }

double max_reduce(const Tensor& a) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : a.data()) m = std::max(m, v);
  return m;
}

double dot(const Tensor& a, const Tensor& b) {
  require_same(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Tensor pad2d(const Tensor& x, std::size_t top, std::size_t bottom, std::size_t left,
             std::size_t right, double value) {
  if (x.rank() < 2) throw ShapeMismatch("pad2d needs rank >= 2");
  Shape s = x.shape();
  const std::size_t h = s[s.size() - 2], w = s[s.size() - 1];
  const std::size_t oh = h + top + bottom, ow = w + left + right;
  s[s.size() - 2] = oh;
  s[s.size() - 1] = ow;
  Tensor out(s, value, x.dtype());
  const std::size_t planes = x.numel() / (h * w);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.ptr() + p * h * w;
    double* dst = out.ptr() + p * oh * ow;
    for (std::size_t i = 0; i < h; ++i) {
      std::copy_n(src + i * w, w, dst + (i + top) * ow + left);
    }
  }
  return out;
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeMismatch("concat_channels of nothing");
  const Dims4 d0 = dims4(parts[0]);
  std::size_t channels = 0;
  for (const auto& p : parts) {
    const Dims4 d = dims4(p);
    if (d.n != d0.n || d.h != d0.h || d.w != d0.w) {
      throw ShapeMismatch("concat_channels: " + shape_str(p.shape()) + " vs " +
                          shape_str(parts[0].shape()));
    }
    channels += d.c;
  }
  Tensor out({d0.n, channels, d0.h, d0.w}, 0.0, parts[0].dtype());
  const std::size_t plane = d0.plane();
  for (std::size_t n = 0; n < d0.n; ++n) {
    double* dst = out.ptr() + n * channels * plane;
    for (const auto& p : parts) {
      const std::size_t c = p.dim(1);
      std::copy_n(p.ptr() + n * c * plane, c * plane, dst);
      dst += c * plane;
    }
  }
  return out;
}

std::vector<Tensor> split_channels(const Tensor& x, std::span<const std::size_t> sizes) {
  const Dims4 d = dims4(x);
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  if (total != d.c) throw ShapeMismatch("split_channels sizes do not sum to channel count");
  std::vector<Tensor> out;
  out.reserve(sizes.size());
  const std::size_t plane = d.plane();
  std::size_t offset = 0;
  for (auto s : sizes) {
    Tensor part({d.n, s, d.h, d.w}, 0.0, x.dtype());
    for (std::size_t n = 0; n < d.n; ++n) {
      std::copy_n(x.ptr() + (n * d.c + offset) * plane, s * plane, part.ptr() + n * s * plane);
    }
    offset += s;
    out.push_back(std::move(part));
  }
  return out;
}

namespace {

struct Tap {
  std::size_t i0, i1;
  double frac;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(src));
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  if (x.rank() < 2) throw ShapeMismatch("resize_bilinear needs rank >= 2");
  if (out_h == 0 || out_w == 0) throw ShapeMismatch("resize_bilinear to an empty grid");
  Shape s = x.shape();
  const std::size_t h = s[s.size() - 2], w = s[s.size() - 1];
  if (h == out_h && w == out_w) return x;
  s[s.size() - 2] = out_h;
  s[s.size() - 1] = out_w;
  Tensor out(s, 0.0, x.dtype());
  const auto ty = bilinear_taps(h, out_h);
  const auto tx = bilinear_taps(w, out_w);
  const std::size_t planes = x.numel() / (h * w);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.ptr() + p * h * w;
    double* dst = out.ptr() + p * out_h * out_w;
    for (std::size_t i = 0; i < out_h; ++i) {
      const Tap& a = ty[i];
      const double* r0 = src + a.i0 * w;
      const double* r1 = src + a.i1 * w;
      for (std::size_t j = 0; j < out_w; ++j) {
        const Tap& b = tx[j];
        const double top = r0[b.i0] * (1.0 - b.frac) + r0[b.i1] * b.frac;
        const double bot = r1[b.i0] * (1.0 - b.frac) + r1[b.i1] * b.frac;
        dst[i * out_w + j] = top * (1.0 - a.frac) + bot * a.frac;
      }
    }
  }
  out.round_to_dtype();
  return out;
}

Tensor resize_bilinear_backward(const Tensor& grad, std::size_t in_h, std::size_t in_w) {
  Shape s = grad.shape();
  const std::size_t out_h = s[s.size() - 2], out_w = s[s.size() - 1];
  if (in_h == out_h && in_w == out_w) return grad;
  s[s.size() - 2] = in_h;
  s[s.size() - 1] = in_w;
  Tensor out(s, 0.0, grad.dtype());
  const auto ty = bilinear_taps(in_h, out_h);
  const auto tx = bilinear_taps(in_w, out_w);
  const std::size_t planes = grad.numel() / (out_h * out_w);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* g = grad.ptr() + p * out_h * out_w;
    double* dst = out.ptr() + p * in_h * in_w;
    for (std::size_t i = 0; i < out_h; ++i) {
      const Tap& a = ty[i];
      for (std::size_t j = 0; j < out_w; ++j) {
        const Tap& b = tx[j];
        const double v = g[i * out_w + j];
        dst[a.i0 * in_w + b.i0] += v * (1.0 - a.frac) * (1.0 - b.frac);
        dst[a.i0 * in_w + b.i1] += v * (1.0 - a.frac) * b.frac;
        dst[a.i1 * in_w + b.i0] += v * a.frac * (1.0 - b.frac);
        dst[a.i1 * in_w + b.i1] += v * a.frac * b.frac;
      }
    }
  }
  return out;
}

Tensor resize_nearest(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  Shape s = x.shape();
  const std::size_t h = s[s.size() - 2], w = s[s.size() - 1];
  if (h == out_h && w == out_w) return x;
  s[s.size() - 2] = out_h;
  s[s.size() - 1] = out_w;
  Tensor out(s, 0.0, x.dtype());
  auto pick = [](std::size_t o, std::size_t in, std::size_t out_n) {
    const double src = (static_cast<double>(o) + 0.5) * static_cast<double>(in) /
                       static_cast<double>(out_n);
    return std::min(static_cast<std::size_t>(std::floor(src)), in - 1);
  };
  const std::size_t planes = x.numel() / (h * w);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.ptr() + p * h * w;
    double* dst = out.ptr() + p * out_h * out_w;
    for (std::size_t i = 0; i < out_h; ++i) {
      const std::size_t si = pick(i, h, out_h);
      for (std::size_t j = 0; j < out_w; ++j) dst[i * out_w + j] = src[si * w + pick(j, w, out_w)];
    }
  }
  return out;
}

}  // namespace rca
