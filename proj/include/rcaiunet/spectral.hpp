#pragma once

#include "rcaiunet/tensor.hpp"

namespace rca {

/// Residue threshold above which idft2d refuses to drop the imaginary part.
inline constexpr double kSymmetryTolerance = 1e-6;

/// Unnormalised forward 2-D DFT over the two trailing dims of `x`, applied
/// independently to every leading slice (batch and channel).
/// Power-of-two lengths use a radix-2 FFT; other lengths a direct sum.
ComplexTensor dft2d(const Tensor& x);
ComplexTensor dft2d(const ComplexTensor& x);

/// Inverse transform with the 1/(H*W) factor. Throws SymmetryViolation when the
/// result has an imaginary residue of kSymmetryTolerance or more.
Tensor idft2d(const ComplexTensor& spectrum);

/// Inverse transform keeping both planes.
ComplexTensor idft2d_complex(const ComplexTensor& spectrum);

/// Keeps the centred low-frequency band of size out_h x out_w, scaled by
/// (out_h*out_w)/(H*W) so that constant images keep their value.
///
/// Along an axis of output length M the retained frequencies are
/// (-ceil(M/2), floor(M/2)]. For even M the bin at +M/2 also stands for -M/2,
/// so it receives the average of the two input bins, which restores
/// Hermitian symmetry for real inputs.
ComplexTensor crop_spectrum(const ComplexTensor& spectrum, std::size_t out_h, std::size_t out_w);

/// Adjoint of crop_spectrum: zero-pads back to (h, w) with the same scale and
/// splits each output Nyquist bin evenly over its two source bins.
ComplexTensor pad_spectrum(const ComplexTensor& cropped, std::size_t h, std::size_t w);

/// Band selection and embedding without the area scale.
ComplexTensor select_band(const ComplexTensor& spectrum, std::size_t out_h, std::size_t out_w);
ComplexTensor embed_band(const ComplexTensor& band, std::size_t h, std::size_t w);

/// Downsamples the trailing dims to (out_h, out_w) by spectral truncation.
Tensor spectral_pool(const Tensor& x, std::size_t out_h, std::size_t out_w);

/// Gradient of spectral_pool with respect to its input.
Tensor spectral_pool_backward(const Tensor& grad, std::size_t in_h, std::size_t in_w);

/// Size-preserving low-pass: keeps the (ceil(H/2), ceil(W/2)) band with unit
/// DC gain. The operator is self-adjoint, so it is also its own backward.
Tensor spectral_lowpass(const Tensor& x);

}  // namespace rca
