#include "rcaiunet/kernels.hpp"

#include <algorithm>
#include <limits>

namespace rca::kernels {

namespace {

/// Output indices o with 0 <= o*stride + k - pad < in, as a half-open range.
struct Span {
  std::size_t lo, hi;
};

Span valid_range(std::size_t out, std::size_t in, std::size_t k, std::size_t pad, std::size_t stride) {
  // need o*stride >= pad - k  and  o*stride <= in - 1 + pad - k
  const long long lo_num = static_cast<long long>(pad) - static_cast<long long>(k);
  const long long hi_num = static_cast<long long>(in) - 1 + static_cast<long long>(pad) - static_cast<long long>(k);
  const auto s = static_cast<long long>(stride);
  long long lo = lo_num <= 0 ? 0 : (lo_num + s - 1) / s;
  long long hi = hi_num < 0 ? -1 : hi_num / s;
  hi = std::min(hi, static_cast<long long>(out) - 1);
  if (hi < lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi + 1)};
}

void check_depthwise(const Tensor& x, const Tensor& w) {
  const Dims4 d = dims4(x);
  const Dims4 k = dims4(w);
  if (k.c != 1 || k.n != d.c || k.h != k.w) {
    throw ShapeMismatch("depthwise kernel " + shape_str(w.shape()) + " for input " + shape_str(x.shape()));
  }
}

}  // namespace

ConvGeometry conv_geometry(std::size_t in_h, std::size_t in_w, std::size_t kernel,
                           std::size_t stride, Padding padding) {
  if (padding == Padding::Valid) {
    if (in_h < kernel || in_w < kernel) throw ShapeMismatch("valid convolution window larger than input");
    return {(in_h - kernel) / stride + 1, (in_w - kernel) / stride + 1, 0, 0};
  }
  const std::size_t oh = (in_h + stride - 1) / stride;
  const std::size_t ow = (in_w + stride - 1) / stride;
  const std::size_t need_h = (oh - 1) * stride + kernel;
  const std::size_t need_w = (ow - 1) * stride + kernel;
  const std::size_t pad_h = need_h > in_h ? need_h - in_h : 0;
  const std::size_t pad_w = need_w > in_w ? need_w - in_w : 0;
  return {oh, ow, pad_h / 2, pad_w / 2};
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, std::size_t stride, Padding padding) {
  check_depthwise(x, w);
  const Dims4 d = dims4(x);
  const std::size_t f = w.dim(2);
  const ConvGeometry g = conv_geometry(d.h, d.w, f, stride, padding);
  Tensor out({d.n, d.c, g.out_h, g.out_w});
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      const double* src = x.ptr() + (n * d.c + c) * d.plane();
      double* dst = out.ptr() + (n * d.c + c) * g.out_h * g.out_w;
      const double* ker = w.ptr() + c * f * f;
      for (std::size_t ki = 0; ki < f; ++ki) {
        const Span rows = valid_range(g.out_h, d.h, ki, g.pad_top, stride);
        for (std::size_t kj = 0; kj < f; ++kj) {
          const Span cols = valid_range(g.out_w, d.w, kj, g.pad_left, stride);
          const double v = ker[ki * f + kj];
          for (std::size_t oi = rows.lo; oi < rows.hi; ++oi) {
            const double* srow = src + (oi * stride + ki - g.pad_top) * d.w + kj - g.pad_left;
            double* drow = dst + oi * g.out_w;
            if (stride == 1) {
              for (std::size_t oj = cols.lo; oj < cols.hi; ++oj) drow[oj] += v * srow[oj];
            } else {
              for (std::size_t oj = cols.lo; oj < cols.hi; ++oj) drow[oj] += v * srow[oj * stride];
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor depthwise_conv2d_grad_input(const Tensor& grad, const Tensor& w, const Shape& x_shape,
                                   std::size_t stride, Padding padding) {
  const Dims4 d = dims4(x_shape);
  const std::size_t f = w.dim(2);
  const ConvGeometry g = conv_geometry(d.h, d.w, f, stride, padding);
  Tensor gx(x_shape);
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      const double* gy = grad.ptr() + (n * d.c + c) * g.out_h * g.out_w;
      double* dst = gx.ptr() + (n * d.c + c) * d.plane();
      const double* ker = w.ptr() + c * f * f;
      for (std::size_t ki = 0; ki < f; ++ki) {
        const Span rows = valid_range(g.out_h, d.h, ki, g.pad_top, stride);
        for (std::size_t kj = 0; kj < f; ++kj) {
          const Span cols = valid_range(g.out_w, d.w, kj, g.pad_left, stride);
          const double v = ker[ki * f + kj];
          for (std::size_t oi = rows.lo; oi < rows.hi; ++oi) {
            double* xrow = dst + (oi * stride + ki - g.pad_top) * d.w + kj - g.pad_left;
            const double* grow = gy + oi * g.out_w;
            for (std::size_t oj = cols.lo; oj < cols.hi; ++oj) xrow[oj * stride] += v * grow[oj];
          }
        }
      }
    }
  }
  return gx;
}

Tensor depthwise_conv2d_grad_weight(const Tensor& grad, const Tensor& x, std::size_t kernel,
                                    std::size_t stride, Padding padding) {
  const Dims4 d = dims4(x);
  const std::size_t f = kernel;
  const ConvGeometry g = conv_geometry(d.h, d.w, f, stride, padding);
  Tensor gw({d.c, 1, f, f});
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      const double* src = x.ptr() + (n * d.c + c) * d.plane();
      const double* gy = grad.ptr() + (n * d.c + c) * g.out_h * g.out_w;
      double* ker = gw.ptr() + c * f * f;
      for (std::size_t ki = 0; ki < f; ++ki) {
        const Span rows = valid_range(g.out_h, d.h, ki, g.pad_top, stride);
        for (std::size_t kj = 0; kj < f; ++kj) {
          const Span cols = valid_range(g.out_w, d.w, kj, g.pad_left, stride);
          double acc = 0.0;
          for (std::size_t oi = rows.lo; oi < rows.hi; ++oi) {
            const double* srow = src + (oi * stride + ki - g.pad_top) * d.w + kj - g.pad_left;
            const double* grow = gy + oi * g.out_w;
            for (std::size_t oj = cols.lo; oj < cols.hi; ++oj) acc += grow[oj] * srow[oj * stride];
          }
          ker[ki * f + kj] += acc;
        }
      }
    }
  }
  return gw;
}

Tensor pointwise_conv(const Tensor& x, const Tensor& w) {
  const Dims4 d = dims4(x);
  const Dims4 k = dims4(w);
  if (k.c != d.c || k.h != 1 || k.w != 1) {
    throw ShapeMismatch("pointwise kernel " + shape_str(w.shape()) + " for input " + shape_str(x.shape()));
  }
  const std::size_t plane = d.plane();
  Tensor out({d.n, k.n, d.h, d.w});
  constexpr std::size_t kTile = 512;  // keeps the input tile of every channel cache resident
  for (std::size_t n = 0; n < d.n; ++n) {
    const double* xin = x.ptr() + n * d.c * plane;
    double* yout = out.ptr() + n * k.n * plane;
    for (std::size_t p0 = 0; p0 < plane; p0 += kTile) {
      const std::size_t len = std::min(kTile, plane - p0);
      std::size_t r = 0;
      for (; r + 4 <= k.n; r += 4) {
        double* d0 = yout + r * plane + p0;
        double* d1 = d0 + plane;
        double* d2 = d1 + plane;
        double* d3 = d2 + plane;
        for (std::size_t c = 0; c < d.c; ++c) {
          const double v0 = w[r * d.c + c], v1 = w[(r + 1) * d.c + c];
          const double v2 = w[(r + 2) * d.c + c], v3 = w[(r + 3) * d.c + c];
          const double* src = xin + c * plane + p0;
          for (std::size_t p = 0; p < len; ++p) {
            const double s = src[p];
            d0[p] += v0 * s;
            d1[p] += v1 * s;
            d2[p] += v2 * s;
            d3[p] += v3 * s;
          }
        }
      }
      for (; r < k.n; ++r) {
        double* dst = yout + r * plane + p0;
        for (std::size_t c = 0; c < d.c; ++c) {
          const double v = w[r * d.c + c];
          const double* src = xin + c * plane + p0;
          for (std::size_t p = 0; p < len; ++p) dst[p] += v * src[p];
        }
      }
    }
  }
  return out;
}

Tensor pointwise_conv_grad_input(const Tensor& grad, const Tensor& w) {
  const Dims4 d = dims4(grad);
  const std::size_t in_c = w.dim(1);
  const std::size_t plane = d.plane();
  Tensor gx({d.n, in_c, d.h, d.w});
  constexpr std::size_t kTile = 512;
  for (std::size_t n = 0; n < d.n; ++n) {
    const double* gin = grad.ptr() + n * d.c * plane;
    double* gout = gx.ptr() + n * in_c * plane;
    for (std::size_t p0 = 0; p0 < plane; p0 += kTile) {
      const std::size_t len = std::min(kTile, plane - p0);
      for (std::size_t c = 0; c < in_c; ++c) {
        double* dst = gout + c * plane + p0;
        for (std::size_t r = 0; r < d.c; ++r) {
          const double v = w[r * in_c + c];
          const double* gy = gin + r * plane + p0;
          for (std::size_t p = 0; p < len; ++p) dst[p] += v * gy[p];
        }
      }
    }
  }
  return gx;
}

Tensor pointwise_conv_grad_weight(const Tensor& grad, const Tensor& x) {
  const Dims4 d = dims4(x);
  const std::size_t out_c = grad.dim(1);
  const std::size_t plane = d.plane();
  Tensor gw({out_c, d.c, 1, 1});
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t r = 0; r < out_c; ++r) {
      const double* gy = grad.ptr() + (n * out_c + r) * plane;
      for (std::size_t c = 0; c < d.c; ++c) {
        const double* src = x.ptr() + (n * d.c + c) * plane;
        double acc = 0.0;
        for (std::size_t p = 0; p < plane; ++p) acc += gy[p] * src[p];
        gw[r * d.c + c] += acc;
      }
    }
  }
  return gw;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
  const Dims4 d = dims4(x);
  if (b.numel() != d.c) throw ShapeMismatch("bias length does not match channel count");
  Tensor out(x.shape());
  const std::size_t plane = d.plane();
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      const double* src = x.ptr() + (n * d.c + c) * plane;
      double* dst = out.ptr() + (n * d.c + c) * plane;
      const double v = b[c];
      for (std::size_t p = 0; p < plane; ++p) dst[p] = src[p] + v;
    }
  }
  return out;
}

Tensor channel_bias_grad(const Tensor& grad) {
  const Dims4 d = dims4(grad);
  Tensor gb({d.c});
  const std::size_t plane = d.plane();
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      const double* gy = grad.ptr() + (n * d.c + c) * plane;
      double acc = 0.0;
      for (std::size_t p = 0; p < plane; ++p) acc += gy[p];
      gb[c] += acc;
    }
  }
  return gb;
}

Tensor mul_channel_broadcast(const Tensor& x, const Tensor& a) {
  const Dims4 d = dims4(x);
  const Dims4 da = dims4(a);
  if (da.n != d.n || da.c != 1 || da.h != d.h || da.w != d.w) {
    throw ShapeMismatch("channel broadcast " + shape_str(a.shape()) + " onto " + shape_str(x.shape()));
  }
  Tensor out(x.shape());
  const std::size_t plane = d.plane();
  for (std::size_t n = 0; n < d.n; ++n) {
    const double* coef = a.ptr() + n * plane;
    for (std::size_t c = 0; c < d.c; ++c) {
      const double* src = x.ptr() + (n * d.c + c) * plane;
      double* dst = out.ptr() + (n * d.c + c) * plane;
      for (std::size_t p = 0; p < plane; ++p) dst[p] = src[p] * coef[p];
    }
  }
  return out;
}

Tensor max_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride, Padding padding,
                  std::vector<std::size_t>* argmax) {
  const Dims4 d = dims4(x);
  const ConvGeometry g = conv_geometry(d.h, d.w, kernel, stride, padding);
  Tensor out({d.n, d.c, g.out_h, g.out_w});
  if (argmax) argmax->assign(out.numel(), 0);
  // Row pass then column pass. Strict '>' in both keeps the first maximum in
  // row-major window order.
  std::vector<double> row_best(d.h * g.out_w);
  std::vector<std::size_t> row_col(d.h * g.out_w);
  std::vector<Span> col_spans(g.out_w), row_spans(g.out_h);
  for (std::size_t oj = 0; oj < g.out_w; ++oj) {
    const long long j0 = static_cast<long long>(oj * stride) - static_cast<long long>(g.pad_left);
    col_spans[oj] = {static_cast<std::size_t>(std::max(0LL, j0)),
                     static_cast<std::size_t>(std::min<long long>(static_cast<long long>(d.w), j0 + kernel))};
  }
  for (std::size_t oi = 0; oi < g.out_h; ++oi) {
    const long long i0 = static_cast<long long>(oi * stride) - static_cast<long long>(g.pad_top);
    row_spans[oi] = {static_cast<std::size_t>(std::max(0LL, i0)),
                     static_cast<std::size_t>(std::min<long long>(static_cast<long long>(d.h), i0 + kernel))};
  }
  std::size_t o = 0;
  for (std::size_t p = 0; p < d.n * d.c; ++p) {
    const double* src = x.ptr() + p * d.plane();
    for (std::size_t i = 0; i < d.h; ++i) {
      const double* srow = src + i * d.w;
      for (std::size_t oj = 0; oj < g.out_w; ++oj) {
        std::size_t bj = col_spans[oj].lo;
        double best = srow[bj];
        for (std::size_t j = bj + 1; j < col_spans[oj].hi; ++j) {
          if (srow[j] > best) {
            best = srow[j];
            bj = j;
          }
        }
        row_best[i * g.out_w + oj] = best;
        row_col[i * g.out_w + oj] = bj;
      }
    }
    for (std::size_t oi = 0; oi < g.out_h; ++oi) {
      for (std::size_t oj = 0; oj < g.out_w; ++oj, ++o) {
        std::size_t bi = row_spans[oi].lo;
        double best = row_best[bi * g.out_w + oj];
        for (std::size_t i = bi + 1; i < row_spans[oi].hi; ++i) {
          if (row_best[i * g.out_w + oj] > best) {
            best = row_best[i * g.out_w + oj];
            bi = i;
          }
        }
        out[o] = best;
        if (argmax) (*argmax)[o] = p * d.plane() + bi * d.w + row_col[bi * g.out_w + oj];
      }
    }
  }
  return out;
}

Tensor max_pool2d_grad(const Tensor& grad, const std::vector<std::size_t>& argmax,
                       const Shape& x_shape) {
  Tensor gx(x_shape);
  for (std::size_t o = 0; o < grad.numel(); ++o) gx[argmax[o]] += grad[o];
  return gx;
}

Tensor conv_transpose2x2(const Tensor& x, const Tensor& w) {
  const Dims4 d = dims4(x);
  const Dims4 k = dims4(w);
  if (k.n != d.c || k.h != 2 || k.w != 2) {
    throw ShapeMismatch("transposed kernel " + shape_str(w.shape()) + " for input " + shape_str(x.shape()));
  }
  const std::size_t co = k.c;
  const std::size_t oh = 2 * d.h, ow = 2 * d.w;
  Tensor out({d.n, co, oh, ow});
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t o = 0; o < co; ++o) {
      double* dst = out.ptr() + (n * co + o) * oh * ow;
      for (std::size_t c = 0; c < d.c; ++c) {
        const double* src = x.ptr() + (n * d.c + c) * d.plane();
        const double* ker = w.ptr() + (c * co + o) * 4;
        for (std::size_t i = 0; i < d.h; ++i) {
          double* r0 = dst + (2 * i) * ow;
          double* r1 = r0 + ow;
          const double* s = src + i * d.w;
          for (std::size_t j = 0; j < d.w; ++j) {
            const double v = s[j];
            r0[2 * j] += v * ker[0];
            r0[2 * j + 1] += v * ker[1];
            r1[2 * j] += v * ker[2];
            r1[2 * j + 1] += v * ker[3];
          }
        }
      }
    }
  }
  return out;
}

Tensor conv2x2_stride2(const Tensor& y, const Tensor& w) {
  const Dims4 d = dims4(y);
  const Dims4 k = dims4(w);
  if (k.c != d.c || k.h != 2 || k.w != 2 || d.h % 2 != 0 || d.w % 2 != 0) {
    throw ShapeMismatch("stride-2 kernel " + shape_str(w.shape()) + " for input " + shape_str(y.shape()));
  }
  const std::size_t ci = k.n;
  const std::size_t h = d.h / 2, wd = d.w / 2;
  Tensor out({d.n, ci, h, wd});
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < ci; ++c) {
      double* dst = out.ptr() + (n * ci + c) * h * wd;
      for (std::size_t o = 0; o < d.c; ++o) {
        const double* src = y.ptr() + (n * d.c + o) * d.plane();
        const double* ker = w.ptr() + (c * d.c + o) * 4;
        for (std::size_t i = 0; i < h; ++i) {
          const double* r0 = src + (2 * i) * d.w;
          const double* r1 = r0 + d.w;
          for (std::size_t j = 0; j < wd; ++j) {
            dst[i * wd + j] += r0[2 * j] * ker[0] + r0[2 * j + 1] * ker[1] + r1[2 * j] * ker[2] +
                               r1[2 * j + 1] * ker[3];
          }
        }
      }
    }
  }
  return out;
}

Tensor conv_transpose2x2_grad_weight(const Tensor& grad, const Tensor& x) {
  const Dims4 d = dims4(x);
  const std::size_t co = grad.dim(1);
  const std::size_t ow = 2 * d.w;
  Tensor gw({d.c, co, 2, 2});
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      const double* src = x.ptr() + (n * d.c + c) * d.plane();
      for (std::size_t o = 0; o < co; ++o) {
        const double* gy = grad.ptr() + (n * co + o) * 4 * d.plane();
        double a0 = 0, a1 = 0, a2 = 0, a3 = 0;
        for (std::size_t i = 0; i < d.h; ++i) {
          const double* r0 = gy + (2 * i) * ow;
          const double* r1 = r0 + ow;
          for (std::size_t j = 0; j < d.w; ++j) {
            const double v = src[i * d.w + j];
            a0 += v * r0[2 * j];
            a1 += v * r0[2 * j + 1];
            a2 += v * r1[2 * j];
            a3 += v * r1[2 * j + 1];
          }
        }
        double* ker = gw.ptr() + (c * co + o) * 4;
        ker[0] += a0;
        ker[1] += a1;
        ker[2] += a2;
        ker[3] += a3;
      }
    }
  }
  return gw;
}

}  // namespace rca::kernels
