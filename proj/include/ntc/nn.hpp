// Convolution layers, weight init, and the Adam optimizer.
#pragma once

#include <random>
#include <span>
#include <vector>

#include "ntc/tensor.hpp"

namespace ntc::nn {

// Uniform in [0,1) from the top 24 bits of mt19937 output, so initialization
// is identical across standard libraries for a given seed.
inline float uniform01(std::mt19937& rng) {
  return float(rng() >> 8) * 0x1p-24f;
}

struct ConvLayer {
  Tensor w;  // (out_c, in_c, k, k)
  Tensor b;  // (1, out_c, 1, 1)
  int stride = 1;
  int pad = 1;
};

// He-uniform weights, bound sqrt(6 / fan_in); zero bias.
ConvLayer make_conv(std::mt19937& rng, int in_c, int out_c, int k, int stride,
                    int pad);

Tensor apply(const ConvLayer& l, const Tensor& x);

class Adam {
 public:
  Adam(float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // One update over the parameter list (order must stay stable across calls).
  // Missing gradients count as zero. Does not clear gradients.
  void step(std::span<const Tensor> params, float lr);

  int64_t steps() const { return t_; }

 private:
  struct Slot {
    std::vector<float> m, v;
  };
  std::vector<Slot> slots_;
  int64_t t_ = 0;
  float beta1_, beta2_, eps_;
};

}  // namespace ntc::nn
