#pragma once

#include <vector>

#include "rcaiunet/tensor.hpp"

/// Forward and backward kernels on plain tensors. Autograd ops and layers are
/// built on top of these; they are also used directly by tests and tools.
namespace rca::kernels {

enum class Padding { Same, Valid };

struct ConvGeometry {
  std::size_t out_h, out_w;
  std::size_t pad_top, pad_left;
};

/// Output size and leading padding for a square window. "same" pads so that the
/// output is ceil(in / stride); "valid" uses no padding.
ConvGeometry conv_geometry(std::size_t in_h, std::size_t in_w, std::size_t kernel,
                           std::size_t stride, Padding padding);

// Depthwise convolution: x [N,C,H,W], w [C,1,f,f].
Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, std::size_t stride, Padding padding);
Tensor depthwise_conv2d_grad_input(const Tensor& grad, const Tensor& w, const Shape& x_shape,
                                   std::size_t stride, Padding padding);
Tensor depthwise_conv2d_grad_weight(const Tensor& grad, const Tensor& x, std::size_t kernel,
                                    std::size_t stride, Padding padding);

// Pointwise (1x1) convolution: x [N,C,H,W], w [R,C,1,1] -> [N,R,H,W].
Tensor pointwise_conv(const Tensor& x, const Tensor& w);
Tensor pointwise_conv_grad_input(const Tensor& grad, const Tensor& w);
Tensor pointwise_conv_grad_weight(const Tensor& grad, const Tensor& x);

// Per-channel bias: x [N,C,H,W], b [C].
Tensor add_channel_bias(const Tensor& x, const Tensor& b);
Tensor channel_bias_grad(const Tensor& grad);

// Broadcast multiply of x [N,C,H,W] by a [N,1,H,W].
Tensor mul_channel_broadcast(const Tensor& x, const Tensor& a);

/// Max pooling; `argmax` receives the flat input index chosen for every output
/// element (first maximum in scan order on ties). Padded cells never win.
Tensor max_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride, Padding padding,
                  std::vector<std::size_t>* argmax = nullptr);
Tensor max_pool2d_grad(const Tensor& grad, const std::vector<std::size_t>& argmax,
                       const Shape& x_shape);

// 2x2 stride-2 transposed convolution: x [N,Ci,H,W], w [Ci,Co,2,2] -> [N,Co,2H,2W].
Tensor conv_transpose2x2(const Tensor& x, const Tensor& w);
Tensor conv_transpose2x2_grad_weight(const Tensor& grad, const Tensor& x);

/// The paired 2x2 stride-2 convolution sharing the transposed kernel:
/// y [N,Co,2H,2W], w [Ci,Co,2,2] -> [N,Ci,H,W]. It is the adjoint of
/// conv_transpose2x2 and therefore also its input gradient.
Tensor conv2x2_stride2(const Tensor& y, const Tensor& w);

}  // namespace rca::kernels
