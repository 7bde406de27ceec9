// Image quality metrics: multi-scale structural similarity, PSNR, and
// bits-per-pixel.
//
// ms_ssim runs on the autodiff tape so it can serve as a training loss.
// The scale count adapts to the image: each scale halves the resolution,
// and only scales whose smallest dimension still covers the comparison
// window are used, with the canonical per-scale exponents renormalized
// over the scales that remain. Anti-correlated structure clamps to a small
// positive floor so the fractional exponents stay defined; the score stays
// in (0, 1] and equals exactly 1 for identical inputs.
#pragma once

#include <cstddef>

#include "ntc/tensor.hpp"

namespace ntc::metrics {

// Scales usable for an image: max(1, min(5, floor(log2(min(h,w)/16)) + 1)).
int ms_ssim_scales(int h, int w);

// Multi-scale structural similarity in [~0, 1]; scalar on the tape.
// Throws ShapeError when shapes differ or min(h, w) < 4.
Tensor ms_ssim(const Tensor& a, const Tensor& b);

// 10*log10(1/MSE) for [0,1]-range frames; +infinity when a == b.
double psnr(const Tensor& a, const Tensor& b);

// Compressed size in bits over original pixel count.
double bpp(size_t container_bytes, int width, int height);

}  // namespace ntc::metrics
