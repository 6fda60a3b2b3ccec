#include "rcaiunet/autograd.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "rcaiunet/spectral.hpp"

namespace rca::ag {

namespace {

std::atomic<std::uint64_t> g_serial{0};
thread_local bool g_grad_enabled = true;
thread_local BranchTrace* g_trace = nullptr;

/// Feeds one bit per element of `pred` into the active trace, if any.
template <typename Pred>
void trace_bits(std::size_t n, Pred pred) {
  if (!g_trace) return;
  std::uint64_t word = 0;
  std::size_t bit = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (pred(i)) word |= std::uint64_t{1} << bit;
    if (++bit == 64) {
      g_trace->mix(word);
      word = 0;
      bit = 0;
    }
  }
  g_trace->mix(word ^ n);
}

Var new_node(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->serial = ++g_serial;
  return n;
}

bool needs(const Var& v) { return v && v->requires_grad; }

}  // namespace

Var constant(Tensor value) { return new_node(std::move(value), false); }
Var parameter(Tensor value) { return new_node(std::move(value), true); }

BranchTrace::BranchTrace() : previous_(g_trace) { g_trace = this; }
BranchTrace::~BranchTrace() { g_trace = previous_; }

void BranchTrace::mix(std::uint64_t word) {
  hash_ ^= word + 0x9e3779b97f4a7c15ULL + (hash_ << 6) + (hash_ >> 2);
  hash_ *= 0x100000001b3ULL;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_node(Tensor value, std::vector<Var> parents, BackwardFn backward) {
  const bool track = g_grad_enabled && std::any_of(parents.begin(), parents.end(), needs);
  Var n = new_node(std::move(value), track);
  if (track) {
    n->parents = std::move(parents);
    n->backward = std::move(backward);
  }
  return n;
}

Tensor Gradients::operator[](const Var& v) const {
  auto it = grads_.find(v.get());
  if (it == grads_.end()) return Tensor::zeros_like(v->value);
  return it->second;
}

const Tensor* Gradients::find(const Node* node) const {
  auto it = grads_.find(node);
  return it == grads_.end() ? nullptr : &it->second;
}

void Gradients::accumulate(const Node* node, Tensor g) {
  auto it = grads_.find(node);
  if (it == grads_.end()) {
    grads_.emplace(node, std::move(g));
    return;
  }
  if (!it->second.same_shape(g)) {
    throw ShapeMismatch("gradient shape " + shape_str(g.shape()) + " for node of shape " +
                        shape_str(it->second.shape()));
  }
  double* dst = it->second.ptr();
  const double* src = g.ptr();
  for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += src[i];
}

Tape::Tape(const Var& root) : root_(root) {
  std::vector<const Node*> stack{root.get()};
  std::unordered_map<const Node*, bool> seen{{root.get(), true}};
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    nodes_.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && !seen.count(p.get())) {
        seen.emplace(p.get(), true);
        stack.push_back(p.get());
      }
    }
  }
  // Creation order is a topological order of the graph.
  std::sort(nodes_.begin(), nodes_.end(),
            [](const Node* a, const Node* b) { return a->serial > b->serial; });
}

Gradients Tape::backward() const {
  if (root_->value.numel() != 1) {
    throw NonScalarRoot("backward root has shape " + shape_str(root_->value.shape()));
  }
  Gradients grads;
  grads.accumulate(root_.get(), Tensor(root_->value.shape(), 1.0));
  for (const Node* n : nodes_) {
    if (!n->backward) continue;
    const Tensor* g = grads.find(n);
    if (g == nullptr) continue;
    std::vector<Tensor> pg = n->backward(*g);
    for (std::size_t i = 0; i < n->parents.size(); ++i) {
      if (i < pg.size() && pg[i].defined() && n->parents[i]->requires_grad) {
        grads.accumulate(n->parents[i].get(), std::move(pg[i]));
      }
    }
  }
  return grads;
}

Gradients backward(const Var& root) { return Tape(root).backward(); }

// ---- elementwise ----------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  return make_node(rca::add(a->value, b->value), {a, b},
                   [](const Tensor& g) { return std::vector<Tensor>{g, g}; });
}

Var sub(const Var& a, const Var& b) {
  return make_node(rca::sub(a->value, b->value), {a, b},
                   [](const Tensor& g) { return std::vector<Tensor>{g, rca::scale(g, -1.0)}; });
}

Var mul(const Var& a, const Var& b) {
  return make_node(rca::mul(a->value, b->value), {a, b}, [a, b](const Tensor& g) {
    return std::vector<Tensor>{rca::mul(g, b->value), rca::mul(g, a->value)};
  });
}

Var div(const Var& a, const Var& b) {
  Tensor out(a->value.shape());
  if (!a->value.same_shape(b->value)) throw ShapeMismatch("div: shapes differ");
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] / b->value[i];
  return make_node(std::move(out), {a, b}, [a, b](const Tensor& g) {
    Tensor ga(g.shape()), gb(g.shape());
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const double bv = b->value[i];
      ga[i] = g[i] / bv;
      gb[i] = -g[i] * a->value[i] / (bv * bv);
    }
    return std::vector<Tensor>{std::move(ga), std::move(gb)};
  });
}

Var scale(const Var& a, double s) {
  return make_node(rca::scale(a->value, s), {a},
                   [s](const Tensor& g) { return std::vector<Tensor>{rca::scale(g, s)}; });
}

Var add_scalar(const Var& a, double s) {
  return make_node(rca::add(a->value, s), {a}, [](const Tensor& g) { return std::vector<Tensor>{g}; });
}

Var relu(const Var& a) {
  trace_bits(a->value.numel(), [&a](std::size_t i) { return a->value[i] > 0.0; });
  return make_node(rca::relu(a->value), {a}, [a](const Tensor& g) {
    Tensor gx(g.shape());
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] = a->value[i] > 0.0 ? g[i] : 0.0;
    return std::vector<Tensor>{std::move(gx)};
  });
}

Var sigmoid(const Var& a) {
  Tensor y = rca::sigmoid(a->value);
  auto out = make_node(y, {a}, nullptr);
  if (out->requires_grad) {
    out->backward = [y](const Tensor& g) {
      Tensor gx(g.shape());
      for (std::size_t i = 0; i < g.numel(); ++i) gx[i] = g[i] * y[i] * (1.0 - y[i]);
      return std::vector<Tensor>{std::move(gx)};
    };
  }
  return out;
}

Var log(const Var& a) {
  Tensor y(a->value.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = std::log(a->value[i]);
  return make_node(std::move(y), {a}, [a](const Tensor& g) {
    Tensor gx(g.shape());
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] = g[i] / a->value[i];
    return std::vector<Tensor>{std::move(gx)};
  });
}

Var clamp(const Var& a, double lo, double hi) {
  trace_bits(a->value.numel(), [&](std::size_t i) { return a->value[i] >= lo; });
  trace_bits(a->value.numel(), [&](std::size_t i) { return a->value[i] <= hi; });
  return make_node(rca::clamp(a->value, lo, hi), {a}, [a, lo, hi](const Tensor& g) {
    Tensor gx(g.shape());
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const double v = a->value[i];
      gx[i] = (v >= lo && v <= hi) ? g[i] : 0.0;
    }
    return std::vector<Tensor>{std::move(gx)};
  });
}

Var sum(const Var& a) {
  const Shape shape = a->value.shape();
  return make_node(Tensor::scalar(rca::sum(a->value)), {a},
                   [shape](const Tensor& g) { return std::vector<Tensor>{Tensor(shape, g[0])}; });
}

Var mean(const Var& a) {
  const Shape shape = a->value.shape();
  const double n = static_cast<double>(a->value.numel());
  return make_node(Tensor::scalar(rca::mean(a->value)), {a},
                   [shape, n](const Tensor& g) { return std::vector<Tensor>{Tensor(shape, g[0] / n)}; });
}

// ---- structural ---------------------------------------------------------------

Var concat_channels(std::span<const Var> parts) {
  std::vector<Tensor> values;
  std::vector<std::size_t> sizes;
  values.reserve(parts.size());
  for (const auto& p : parts) {
    values.push_back(p->value);
    sizes.push_back(p->value.dim(1));
  }
  return make_node(rca::concat_channels(values), std::vector<Var>(parts.begin(), parts.end()),
                   [sizes](const Tensor& g) { return rca::split_channels(g, sizes); });
}

Var mul_channel_broadcast(const Var& x, const Var& a) {
  return make_node(kernels::mul_channel_broadcast(x->value, a->value), {x, a}, [x, a](const Tensor& g) {
    const Dims4 d = dims4(x->value);
    Tensor gx = needs(x) ? kernels::mul_channel_broadcast(g, a->value) : Tensor{};
    Tensor ga;
    if (needs(a)) {
      ga = Tensor(a->value.shape());
      const std::size_t plane = d.plane();
      for (std::size_t n = 0; n < d.n; ++n) {
        double* dst = ga.ptr() + n * plane;
        for (std::size_t c = 0; c < d.c; ++c) {
          const double* gy = g.ptr() + (n * d.c + c) * plane;
          const double* xs = x->value.ptr() + (n * d.c + c) * plane;
          for (std::size_t p = 0; p < plane; ++p) dst[p] += gy[p] * xs[p];
        }
      }
    }
    return std::vector<Tensor>{std::move(gx), std::move(ga)};
  });
}

Var resize_bilinear(const Var& x, std::size_t out_h, std::size_t out_w) {
  const std::size_t in_h = x->value.dim(x->value.rank() - 2);
  const std::size_t in_w = x->value.dim(x->value.rank() - 1);
  return make_node(rca::resize_bilinear(x->value, out_h, out_w), {x}, [in_h, in_w](const Tensor& g) {
    return std::vector<Tensor>{rca::resize_bilinear_backward(g, in_h, in_w)};
  });
}

// ---- convolution and pooling --------------------------------------------------

Var depthwise_conv2d(const Var& x, const Var& w, std::size_t stride, kernels::Padding padding) {
  return make_node(kernels::depthwise_conv2d(x->value, w->value, stride, padding), {x, w},
                   [x, w, stride, padding](const Tensor& g) {
                     Tensor gx = needs(x) ? kernels::depthwise_conv2d_grad_input(g, w->value, x->value.shape(),
                                                                                 stride, padding)
                                          : Tensor{};
                     Tensor gw = needs(w) ? kernels::depthwise_conv2d_grad_weight(g, x->value, w->value.dim(2),
                                                                                  stride, padding)
                                          : Tensor{};
                     return std::vector<Tensor>{std::move(gx), std::move(gw)};
                   });
}

Var pointwise_conv(const Var& x, const Var& w) {
  return make_node(kernels::pointwise_conv(x->value, w->value), {x, w}, [x, w](const Tensor& g) {
    Tensor gx = needs(x) ? kernels::pointwise_conv_grad_input(g, w->value) : Tensor{};
    Tensor gw = needs(w) ? kernels::pointwise_conv_grad_weight(g, x->value) : Tensor{};
    return std::vector<Tensor>{std::move(gx), std::move(gw)};
  });
}

Var add_channel_bias(const Var& x, const Var& b) {
  return make_node(kernels::add_channel_bias(x->value, b->value), {x, b}, [b](const Tensor& g) {
    Tensor gb = needs(b) ? kernels::channel_bias_grad(g) : Tensor{};
    return std::vector<Tensor>{g, std::move(gb)};
  });
}

Var conv_transpose2x2(const Var& x, const Var& w) {
  return make_node(kernels::conv_transpose2x2(x->value, w->value), {x, w}, [x, w](const Tensor& g) {
    Tensor gx = needs(x) ? kernels::conv2x2_stride2(g, w->value) : Tensor{};
    Tensor gw = needs(w) ? kernels::conv_transpose2x2_grad_weight(g, x->value) : Tensor{};
    return std::vector<Tensor>{std::move(gx), std::move(gw)};
  });
}

Var max_pool2d(const Var& x, std::size_t kernel, std::size_t stride, kernels::Padding padding) {
  auto argmax = std::make_shared<std::vector<std::size_t>>();
  Tensor y = kernels::max_pool2d(x->value, kernel, stride, padding, argmax.get());
  if (g_trace) {
    for (std::size_t idx : *argmax) g_trace->mix(idx);
  }
  const Shape shape = x->value.shape();
  return make_node(std::move(y), {x}, [argmax, shape](const Tensor& g) {
    return std::vector<Tensor>{kernels::max_pool2d_grad(g, *argmax, shape)};
  });
}

Var spectral_pool(const Var& x, std::size_t out_h, std::size_t out_w) {
  const std::size_t in_h = x->value.dim(x->value.rank() - 2);
  const std::size_t in_w = x->value.dim(x->value.rank() - 1);
  return make_node(rca::spectral_pool(x->value, out_h, out_w), {x}, [in_h, in_w](const Tensor& g) {
    return std::vector<Tensor>{rca::spectral_pool_backward(g, in_h, in_w)};
  });
}

Var spectral_lowpass(const Var& x) {
  return make_node(rca::spectral_lowpass(x->value), {x},
                   [](const Tensor& g) { return std::vector<Tensor>{rca::spectral_lowpass(g)}; });
}

// ---- batch normalisation ------------------------------------------------------

Var batch_norm_train(const Var& x, const Var& gamma, const Var& beta, double eps, Tensor* batch_mean,
                     Tensor* batch_var) {
  const Dims4 d = dims4(x->value);
  const std::size_t plane = d.plane();
  const double m = static_cast<double>(d.n * plane);
  Tensor mu({d.c}), var({d.c});
  for (std::size_t c = 0; c < d.c; ++c) {
    double s = 0.0;
    for (std::size_t n = 0; n < d.n; ++n) {
      const double* src = x->value.ptr() + (n * d.c + c) * plane;
      for (std::size_t p = 0; p < plane; ++p) s += src[p];
    }
    const double mc = s / m;
    double v = 0.0;
    for (std::size_t n = 0; n < d.n; ++n) {
      const double* src = x->value.ptr() + (n * d.c + c) * plane;
      for (std::size_t p = 0; p < plane; ++p) v += (src[p] - mc) * (src[p] - mc);
    }
    mu[c] = mc;
    var[c] = v / m;
  }
  const bool record = grad_enabled();
  auto xhat = record ? std::make_shared<Tensor>(x->value.shape()) : std::make_shared<Tensor>();
  Tensor inv_std({d.c});
  Tensor y(x->value.shape());
  for (std::size_t c = 0; c < d.c; ++c) {
    inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
    const double gm = gamma->value[c], bt = beta->value[c], mc = mu[c], is = inv_std[c];
    for (std::size_t n = 0; n < d.n; ++n) {
      const std::size_t off = (n * d.c + c) * plane;
      const double* src = x->value.ptr() + off;
      double* dst = y.ptr() + off;
      if (record) {
        double* xh = xhat->ptr() + off;
        for (std::size_t p = 0; p < plane; ++p) {
          xh[p] = (src[p] - mc) * is;
          dst[p] = gm * xh[p] + bt;
        }
      } else {
        for (std::size_t p = 0; p < plane; ++p) dst[p] = gm * ((src[p] - mc) * is) + bt;
      }
    }
  }
  if (batch_mean) *batch_mean = mu;
  if (batch_var) *batch_var = var;
  return make_node(std::move(y), {x, gamma, beta}, [xhat, inv_std, gamma, d, m](const Tensor& g) {
    const std::size_t plane = d.plane();
    Tensor gx(g.shape()), gg({d.c}), gb({d.c});
    for (std::size_t c = 0; c < d.c; ++c) {
      double sg = 0.0, sgx = 0.0;
      for (std::size_t n = 0; n < d.n; ++n) {
        const std::size_t off = (n * d.c + c) * plane;
        for (std::size_t p = 0; p < plane; ++p) {
          sg += g[off + p];
          sgx += g[off + p] * (*xhat)[off + p];
        }
      }
      gb[c] = sg;
      gg[c] = sgx;
      const double k = gamma->value[c] * inv_std[c];
      const double mg = sg / m, mgx = sgx / m;
      for (std::size_t n = 0; n < d.n; ++n) {
        const std::size_t off = (n * d.c + c) * plane;
        for (std::size_t p = 0; p < plane; ++p) {
          gx[off + p] = k * (g[off + p] - mg - (*xhat)[off + p] * mgx);
        }
      }
    }
    return std::vector<Tensor>{std::move(gx), std::move(gg), std::move(gb)};
  });
}

Var batch_norm_eval(const Var& x, const Var& gamma, const Var& beta, const Tensor& mean,
                    const Tensor& var, double eps) {
  const Dims4 d = dims4(x->value);
  const std::size_t plane = d.plane();
  Tensor inv_std({d.c});
  for (std::size_t c = 0; c < d.c; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
  Tensor y(x->value.shape());
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      const std::size_t off = (n * d.c + c) * plane;
      const double k = gamma->value[c] * inv_std[c];
      const double b = beta->value[c] - mean[c] * k;
      for (std::size_t p = 0; p < plane; ++p) y[off + p] = x->value[off + p] * k + b;
    }
  }
  return make_node(std::move(y), {x, gamma, beta}, [x, gamma, mean, inv_std, d](const Tensor& g) {
    const std::size_t plane = d.plane();
    Tensor gx(g.shape()), gg({d.c}), gb({d.c});
    for (std::size_t n = 0; n < d.n; ++n) {
      for (std::size_t c = 0; c < d.c; ++c) {
        const std::size_t off = (n * d.c + c) * plane;
        const double k = gamma->value[c] * inv_std[c];
        for (std::size_t p = 0; p < plane; ++p) {
          gx[off + p] = g[off + p] * k;
          gb[c] += g[off + p];
          gg[c] += g[off + p] * (x->value[off + p] - mean[c]) * inv_std[c];
        }
      }
    }
    return std::vector<Tensor>{std::move(gx), std::move(gg), std::move(gb)};
  });
}

}  // namespace rca::ag
