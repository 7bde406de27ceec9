// Importance-map helpers: level quantization, prefix masks, budget penalty.
//
// The single-channel importance map tau in [0,1] selects how many latent
// channels stay active at each spatial site. The hard mask drives coding; the
// soft ramp (ops::soft_prefix_mask) is its training-time relaxation. The mask
// is never transmitted: masked latents quantize to the zero symbol and the
// decoder just dequantizes whatever arrives.
#pragma once

#include "ntc/tensor.hpp"

namespace ntc::mask {

// Snap tau to F+1 uniform levels, straight-through gradient.
Tensor quantize_tau(const Tensor& tau, int levels);

// Hard 0/1 prefix mask: channel k active iff k < lround(tau_q * channels).
// Plain tensor, no gradient.
Tensor hard_prefix_mask(const Tensor& tau_q, int channels);

// | mean(tau) - budget | : pulls the average channel fraction toward budget.
Tensor budget_penalty(const Tensor& tau, float budget);

}  // namespace ntc::mask
