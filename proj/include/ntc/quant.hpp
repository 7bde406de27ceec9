// 8-bit uniform latent quantizer with a zero-preserving grid.
//
// The stored range is widened to include 0 and then nudged so that 0.0 falls
// exactly on a grid point: masked-off latents survive the round trip bit-for-
// bit. Encoder and decoder both recompute the grid from the two stored header
// floats, which is what makes their reconstructions identical.
#pragma once

#include <span>
#include <vector>

#include "ntc/tensor.hpp"

namespace ntc::quant {

struct Range {
  float y_min = 0.f;
  float y_max = 0.f;
  bool degenerate() const { return y_min == y_max; }
};

struct Grid {
  float step = 0.f;
  int z0 = 0;  // symbol that dequantizes to exactly 0.0
};

// Range for one sample's values: widen to cover 0, then shift the grid onto
// it. Constant input short-circuits to a degenerate range that stores the
// constant itself. Throws VerifyError on non-finite values.
Range derive_range(std::span<const float> vals);

Grid grid_from_range(const Range& r);

int quantize_value(float x, const Range& r, const Grid& g);
float dequantize_symbol(int q, const Range& r, const Grid& g);

struct LatentQuant {
  Tensor dequantized;         // straight-through identity to the input
  Tensor symbols;             // integers 0..255; straight-through slope 255/range
  std::vector<Range> ranges;  // one per batch sample
};

// Quantize per sample; both outputs stay on the tape.
LatentQuant quantize_latent(const Tensor& y);

// Decoder side: rebuild values from received symbols (single sample).
Tensor dequantize_latent(const Tensor& symbols, const Range& r);

}  // namespace ntc::quant
