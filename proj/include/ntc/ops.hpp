// Differentiable tensor operations recorded on the autodiff tape.
// Only the fixed set of ops the codec needs; shapes are validated and
// mismatches rejected with diagnostics naming both shapes.
#pragma once

#include <span>

#include "ntc/tensor.hpp"

namespace ntc::ops {

// weight shape (out_c, in_c, k, k); bias (1, out_c, 1, 1) or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad);

// out(n, c, h*r+a, w*r+b) = in(n, c*r^2 + a*r + b, h, w)
Tensor pixel_shuffle(const Tensor& x, int r);
Tensor pixel_unshuffle(const Tensor& x, int r);

Tensor leaky_relu(const Tensor& x, float slope = 0.2f);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor clamp(const Tensor& x, float lo, float hi);
Tensor clamp_min(const Tensor& x, float lo);
Tensor abs(const Tensor& x);  // subgradient 0 at the kink
Tensor pow_scalar(const Tensor& x, float e);  // requires x > 0

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& x, float s);
Tensor mul_scalar(const Tensor& x, float s);

Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor slice_channels(const Tensor& x, int c0, int c1);  // [c0, c1)
Tensor crop_spatial(const Tensor& x, int h, int w);      // top-left corner

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// Softmax over the channel dimension at every (n, h, w) site.
Tensor softmax_channels(const Tensor& x);

// 1-D valid convolution with a fixed (non-trainable) kernel along H or W,
// applied per channel. Building block for the Gaussian blur in MS-SSIM.
Tensor blur1d_h(const Tensor& x, std::span<const float> kernel);
Tensor blur1d_w(const Tensor& x, std::span<const float> kernel);

// 2x2 average pooling, stride 2, trailing odd row/column dropped.
Tensor avg_pool2(const Tensor& x);

// Round half away from zero; straight-through (identity) backward.
Tensor ste_round(const Tensor& x);

Tensor detach(const Tensor& x);

// tau (n,1,h,w) in [0,1] -> (n,channels,h,w) with m_k = clamp(F*tau - k, 0, 1).
Tensor soft_prefix_mask(const Tensor& tau, int channels);

// Per-element code length in bits under a discretized logistic mixture with
// channel-autoregressive means. mu/lam/s are (n, K*C, h, w) k-major, pi is
// (n, K, h, w) post-softmax, symbols (n, C, h, w) in [0, 255]. The context
// value for channel c is (symbols[c-1] - 127.5)/127.5; the lam term is
// dropped for c = 0. Probabilities are floored before the log.
Tensor logistic_mixture_bits(const Tensor& mu, const Tensor& lam,
                             const Tensor& s, const Tensor& pi,
                             const Tensor& symbols, int mixtures);

}  // namespace ntc::ops
