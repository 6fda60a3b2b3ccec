#include "rcaiunet/spectral.hpp"

#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <tuple>
#include <numbers>
#include <unordered_map>
#include <utility>

namespace rca {

namespace {

using cplx = std::complex<double>;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// Twiddle table and bit-reversal permutation for one transform length.
struct LinePlan {
  std::size_t n = 0;
  bool pow2 = false;
  std::vector<cplx> twiddle;  // exp(-2 pi i k / n)
  std::vector<std::size_t> bitrev;

  explicit LinePlan(std::size_t len) : n(len), pow2(is_pow2(len)), twiddle(len) {
    for (std::size_t k = 0; k < n; ++k) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      twiddle[k] = {std::cos(a), std::sin(a)};
    }
    if (pow2) {
      bitrev.resize(n);
      std::size_t bits = 0;
      while ((std::size_t{1} << bits) < n) ++bits;
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t r = 0;
        for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1U) << (bits - 1 - b);
        bitrev[i] = r;
      }
    }
  }

  /// Unnormalised transform in place; `inverse` flips the exponent sign.
  void run(std::vector<cplx>& line, std::vector<cplx>& scratch, bool inverse) const {
    if (n == 1) return;
    if (pow2) {
      for (std::size_t i = 0; i < n; ++i) {
        if (i < bitrev[i]) std::swap(line[i], line[bitrev[i]]);
      }
      for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        const std::size_t step = n / len;
        for (std::size_t start = 0; start < n; start += len) {
          for (std::size_t k = 0; k < half; ++k) {
            cplx w = twiddle[k * step];
            if (inverse) w = std::conj(w);
            const cplx u = line[start + k];
            const cplx v = line[start + k + half] * w;
            line[start + k] = u + v;
            line[start + k + half] = u - v;
          }
        }
      }
      return;
    }
    scratch.assign(n, cplx{});
    for (std::size_t k = 0; k < n; ++k) {
      cplx acc{};
      for (std::size_t j = 0; j < n; ++j) {
        cplx w = twiddle[(j * k) % n];
        if (inverse) w = std::conj(w);
        acc += line[j] * w;
      }
      scratch[k] = acc;
    }
    line.swap(scratch);
  }
};

const LinePlan& plan_for(std::size_t n) {
  thread_local std::unordered_map<std::size_t, std::unique_ptr<LinePlan>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<LinePlan>(n);
  return *slot;
}

void require_2d(const Shape& s, const char* op) {
  if (s.size() < 2) throw ShapeMismatch(std::string(op) + " needs a tensor of rank >= 2");
}

/// Separable 2-D transform of every trailing H x W slice, in place.
void transform_planes(ComplexTensor& t, bool inverse) {
  require_2d(t.shape, "dft2d");
  const std::size_t h = t.shape[t.shape.size() - 2];
  const std::size_t w = t.shape[t.shape.size() - 1];
  const std::size_t planes = t.numel() / (h * w);
  const LinePlan& row_plan = plan_for(w);
  const LinePlan& col_plan = plan_for(h);
  std::vector<cplx> line, scratch;
  for (std::size_t p = 0; p < planes; ++p) {
    double* re = t.re.data() + p * h * w;
    double* im = t.im.data() + p * h * w;
    line.resize(w);
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) line[j] = {re[i * w + j], im[i * w + j]};
      row_plan.run(line, scratch, inverse);
      for (std::size_t j = 0; j < w; ++j) {
        re[i * w + j] = line[j].real();
        im[i * w + j] = line[j].imag();
      }
    }
    line.resize(h);
    for (std::size_t j = 0; j < w; ++j) {
      for (std::size_t i = 0; i < h; ++i) line[i] = {re[i * w + j], im[i * w + j]};
      col_plan.run(line, scratch, inverse);
      for (std::size_t i = 0; i < h; ++i) {
        re[i * w + j] = line[i].real();
        im[i * w + j] = line[i].imag();
      }
    }
  }
  if (inverse) {
    const double norm = 1.0 / static_cast<double>(h * w);
    for (auto& v : t.re) v *= norm;
    for (auto& v : t.im) v *= norm;
  }
}

struct BandTap {
  std::size_t index;
  double weight;
};

/// Input bins feeding each output bin along one axis.
std::vector<std::vector<BandTap>> band_taps(std::size_t in, std::size_t out) {
  std::vector<std::vector<BandTap>> taps(out);
  const auto in_i = static_cast<long long>(in);
  auto wrap = [in_i](long long k) { return static_cast<std::size_t>(((k % in_i) + in_i) % in_i); };
  for (std::size_t m = 0; m < out; ++m) {
    const long long k = (m <= out / 2) ? static_cast<long long>(m)
                                       : static_cast<long long>(m) - static_cast<long long>(out);
    if (out % 2 == 0 && m == out / 2) {
      taps[m] = {{wrap(k), 0.5}, {wrap(-k), 0.5}};
    } else {
      taps[m] = {{wrap(k), 1.0}};
    }
  }
  return taps;
}

Shape with_trailing(Shape s, std::size_t h, std::size_t w) {
  s[s.size() - 2] = h;
  s[s.size() - 1] = w;
  return s;
}

}  // namespace

ComplexTensor dft2d(const Tensor& x) {
  require_2d(x.shape(), "dft2d");
  ComplexTensor out(x.shape());
  std::copy(x.data().begin(), x.data().end(), out.re.begin());
  transform_planes(out, false);
  return out;
}

ComplexTensor dft2d(const ComplexTensor& x) {
  ComplexTensor out = x;
  transform_planes(out, false);
  return out;
}

ComplexTensor idft2d_complex(const ComplexTensor& spectrum) {
  ComplexTensor out = spectrum;
  transform_planes(out, true);
  return out;
}

Tensor idft2d(const ComplexTensor& spectrum) {
  ComplexTensor z = idft2d_complex(spectrum);
  double residue = 0.0;
  for (double v : z.im) residue = std::max(residue, std::abs(v));
  if (!(residue < kSymmetryTolerance)) {
    throw SymmetryViolation("inverse DFT has imaginary residue " + std::to_string(residue));
  }
  return Tensor(z.shape, std::move(z.re));
}

ComplexTensor select_band(const ComplexTensor& spectrum, std::size_t out_h, std::size_t out_w) {
  require_2d(spectrum.shape, "crop_spectrum");
  const std::size_t h = spectrum.shape[spectrum.shape.size() - 2];
  const std::size_t w = spectrum.shape[spectrum.shape.size() - 1];
  if (out_h < 1 || out_w < 1 || out_h > h || out_w > w) {
    throw BadCropSize("cannot crop " + std::to_string(h) + "x" + std::to_string(w) + " spectrum to " +
                      std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  const auto ty = band_taps(h, out_h);
  const auto tx = band_taps(w, out_w);
  ComplexTensor out(with_trailing(spectrum.shape, out_h, out_w));
  const std::size_t planes = spectrum.numel() / (h * w);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* sre = spectrum.re.data() + p * h * w;
    const double* sim = spectrum.im.data() + p * h * w;
    double* ore = out.re.data() + p * out_h * out_w;
    double* oim = out.im.data() + p * out_h * out_w;
    for (std::size_t m = 0; m < out_h; ++m) {
      for (std::size_t n = 0; n < out_w; ++n) {
        double r = 0.0, i = 0.0;
        for (const auto& a : ty[m]) {
          for (const auto& b : tx[n]) {
            const double wgt = a.weight * b.weight;
            r += wgt * sre[a.index * w + b.index];
            i += wgt * sim[a.index * w + b.index];
          }
        }
        ore[m * out_w + n] = r;
        oim[m * out_w + n] = i;
      }
    }
  }
  return out;
}

ComplexTensor embed_band(const ComplexTensor& band, std::size_t h, std::size_t w) {
  require_2d(band.shape, "pad_spectrum");
  const std::size_t out_h = band.shape[band.shape.size() - 2];
  const std::size_t out_w = band.shape[band.shape.size() - 1];
  if (out_h > h || out_w > w) throw BadCropSize("pad_spectrum target smaller than band");
  const auto ty = band_taps(h, out_h);
  const auto tx = band_taps(w, out_w);
  ComplexTensor out(with_trailing(band.shape, h, w));
  const std::size_t planes = band.numel() / (out_h * out_w);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* bre = band.re.data() + p * out_h * out_w;
    const double* bim = band.im.data() + p * out_h * out_w;
    double* ore = out.re.data() + p * h * w;
    double* oim = out.im.data() + p * h * w;
    for (std::size_t m = 0; m < out_h; ++m) {
      for (std::size_t n = 0; n < out_w; ++n) {
        for (const auto& a : ty[m]) {
          for (const auto& b : tx[n]) {
            const double wgt = a.weight * b.weight;
            ore[a.index * w + b.index] += wgt * bre[m * out_w + n];
            oim[a.index * w + b.index] += wgt * bim[m * out_w + n];
          }
        }
      }
    }
  }
  return out;
}

ComplexTensor crop_spectrum(const ComplexTensor& spectrum, std::size_t out_h, std::size_t out_w) {
  ComplexTensor out = select_band(spectrum, out_h, out_w);
  const std::size_t h = spectrum.shape[spectrum.shape.size() - 2];
  const std::size_t w = spectrum.shape[spectrum.shape.size() - 1];
  const double c = static_cast<double>(out_h * out_w) / static_cast<double>(h * w);
  for (auto& v : out.re) v *= c;
  for (auto& v : out.im) v *= c;
  return out;
}

ComplexTensor pad_spectrum(const ComplexTensor& cropped, std::size_t h, std::size_t w) {
  ComplexTensor out = embed_band(cropped, h, w);
  const std::size_t out_h = cropped.shape[cropped.shape.size() - 2];
  const std::size_t out_w = cropped.shape[cropped.shape.size() - 1];
  const double c = static_cast<double>(out_h * out_w) / static_cast<double>(h * w);
  for (auto& v : out.re) v *= c;
  for (auto& v : out.im) v *= c;
  return out;
}

namespace {

/// Largest plane side for which spectral ops use dense per-axis matrices
/// instead of transforms.
constexpr std::size_t kMatrixPathMaxSide = 64;

using Matrix = std::vector<double>;  // row-major rows x cols

/// Real (out x in) matrix of the one-axis map x -> idft_out(band(dft_in(x))),
/// with `embed_to` > 0 re-embedding the band into that length first.
Matrix axis_matrix(std::size_t in, std::size_t band, std::size_t embed_to) {
  const auto taps = band_taps(in, band);
  const std::size_t out = embed_to ? embed_to : band;
  const auto etaps = embed_to ? band_taps(embed_to, band) : std::vector<std::vector<BandTap>>{};
  Matrix m(out * in);
  std::vector<cplx> spec(out);
  for (std::size_t j = 0; j < in; ++j) {
    std::fill(spec.begin(), spec.end(), cplx{});
    for (std::size_t b = 0; b < band; ++b) {
      cplx v{};
      for (const auto& t : taps[b]) {
        const double a = -2.0 * std::numbers::pi * static_cast<double>((t.index * j) % in) / static_cast<double>(in);
        v += t.weight * cplx{std::cos(a), std::sin(a)};
      }
      if (embed_to) {
        for (const auto& t : etaps[b]) spec[t.index] += t.weight * v;
      } else {
        spec[b] = v;
      }
    }
    for (std::size_t o = 0; o < out; ++o) {
      cplx acc{};
      for (std::size_t k = 0; k < out; ++k) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>((k * o) % out) / static_cast<double>(out);
        acc += spec[k] * cplx{std::cos(a), std::sin(a)};
      }
      // per-axis share of the crop scale times the inverse normalisation
      m[o * in + j] = acc.real() / static_cast<double>(in);
    }
  }
  return m;
}

/// Real (n x b) matrix z -> idft_n(embed(dft_b(z))) / b. Composed with the
/// pool matrix it gives the one-axis low-pass.
Matrix axis_upsample_matrix(std::size_t n, std::size_t b) {
  const auto etaps = band_taps(n, b);
  Matrix m(n * b);
  std::vector<cplx> spec(n);
  for (std::size_t j = 0; j < b; ++j) {
    std::fill(spec.begin(), spec.end(), cplx{});
    for (std::size_t k = 0; k < b; ++k) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>((k * j) % b) / static_cast<double>(b);
      for (const auto& t : etaps[k]) spec[t.index] += t.weight * cplx{std::cos(a), std::sin(a)};
    }
    for (std::size_t o = 0; o < n; ++o) {
      cplx acc{};
      for (std::size_t k = 0; k < n; ++k) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>((k * o) % n) / static_cast<double>(n);
        acc += spec[k] * cplx{std::cos(a), std::sin(a)};
      }
      m[o * b + j] = acc.real() / static_cast<double>(b);
    }
  }
  return m;
}

const Matrix& cached_upsample(std::size_t n, std::size_t b) {
  thread_local std::map<std::pair<std::size_t, std::size_t>, Matrix> cache;
  auto key = std::make_pair(n, b);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, axis_upsample_matrix(n, b)).first;
  return it->second;
}

const Matrix& cached_matrix(std::size_t in, std::size_t band, std::size_t embed_to) {
  thread_local std::map<std::tuple<std::size_t, std::size_t, std::size_t>, Matrix> cache;
  auto key = std::make_tuple(in, band, embed_to);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, axis_matrix(in, band, embed_to)).first;
  return it->second;
}

/// Y = A X B^T on every trailing plane, A: (oh x h), B: (ow x w). With
/// `transpose` the adjoint Y = A^T X B is applied instead.
Tensor apply_separable(const Tensor& x, const Matrix& a, const Matrix& b, std::size_t rows_a,
                       std::size_t rows_b, bool transpose) {
  const std::size_t h = x.shape()[x.rank() - 2];
  const std::size_t w = x.shape()[x.rank() - 1];
  const std::size_t oh = transpose ? a.size() / h : rows_a;
  const std::size_t ow = transpose ? b.size() / w : rows_b;
  const std::size_t planes = x.numel() / (h * w);
  Tensor out(with_trailing(x.shape(), oh, ow));
  std::vector<double> tmp(h * ow);
  std::vector<double> bt;
  if (!transpose) {
    bt.resize(w * ow);
    for (std::size_t n = 0; n < ow; ++n) {
      for (std::size_t j = 0; j < w; ++j) bt[j * ow + n] = b[n * w + j];
    }
  }
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.ptr() + p * h * w;
    double* dst = out.ptr() + p * oh * ow;
    std::fill(tmp.begin(), tmp.end(), 0.0);
    for (std::size_t i = 0; i < h; ++i) {
      const double* srow = src + i * w;
      double* trow = tmp.data() + i * ow;
      if (!transpose) {
        for (std::size_t j = 0; j < w; ++j) {
          const double v = srow[j];
          const double* bcol = bt.data() + j * ow;
          for (std::size_t n = 0; n < ow; ++n) trow[n] += v * bcol[n];
        }
      } else {
        for (std::size_t j = 0; j < w; ++j) {
          const double v = srow[j];
          const double* brow = b.data() + j * ow;
          for (std::size_t n = 0; n < ow; ++n) trow[n] += v * brow[n];
        }
      }
    }
    for (std::size_t m = 0; m < oh; ++m) {
      double* drow = dst + m * ow;
      for (std::size_t i = 0; i < h; ++i) {
        const double c = transpose ? a[i * oh + m] : a[m * h + i];
        const double* trow = tmp.data() + i * ow;
        for (std::size_t n = 0; n < ow; ++n) drow[n] += c * trow[n];
      }
    }
  }
  return out;
}

bool use_matrix_path(std::size_t h, std::size_t w) { return std::max(h, w) <= kMatrixPathMaxSide; }

}  // namespace

Tensor spectral_pool(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  require_2d(x.shape(), "spectral_pool");
  const std::size_t h = x.shape()[x.rank() - 2];
  const std::size_t w = x.shape()[x.rank() - 1];
  if (out_h < 1 || out_w < 1 || out_h > h || out_w > w) {
    throw BadCropSize("cannot pool " + std::to_string(h) + "x" + std::to_string(w) + " to " +
                      std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  Tensor y = use_matrix_path(h, w)
                 ? apply_separable(x, cached_matrix(h, out_h, 0), cached_matrix(w, out_w, 0), out_h, out_w, false)
                 : idft2d(crop_spectrum(dft2d(x), out_h, out_w));
  return std::move(y).astype(x.dtype());
}

Tensor spectral_pool_backward(const Tensor& grad, std::size_t in_h, std::size_t in_w) {
  if (use_matrix_path(in_h, in_w)) {
    const std::size_t oh = grad.shape()[grad.rank() - 2];
    const std::size_t ow = grad.shape()[grad.rank() - 1];
    return apply_separable(grad, cached_matrix(in_h, oh, 0), cached_matrix(in_w, ow, 0), 0, 0, true);
  }
  // The area scale of the crop cancels against the two transform normalisations.
  return idft2d(embed_band(dft2d(grad), in_h, in_w));
}

Tensor spectral_lowpass(const Tensor& x) {
  require_2d(x.shape(), "spectral_lowpass");
  const std::size_t h = x.shape()[x.rank() - 2];
  const std::size_t w = x.shape()[x.rank() - 1];
  if (use_matrix_path(h, w)) {
    const std::size_t bh = (h + 1) / 2, bw = (w + 1) / 2;
    const Tensor band = apply_separable(x, cached_matrix(h, bh, 0), cached_matrix(w, bw, 0), bh, bw, false);
    return apply_separable(band, cached_upsample(h, bh), cached_upsample(w, bw), h, w, false).astype(x.dtype());
  }
  const ComplexTensor band = select_band(dft2d(x), (h + 1) / 2, (w + 1) / 2);
  Tensor y = idft2d(embed_band(band, h, w));
  return std::move(y).astype(x.dtype());
}

}  // namespace rca
