#include "ntc/mask.hpp"

#include <cmath>

#include "ntc/kernels.hpp"
#include "ntc/ops.hpp"

namespace ntc::mask {

Tensor quantize_tau(const Tensor& tau, int levels) {
  if (levels < 1)
    throw ShapeError("quantize_tau: need at least 1 level, got " +
                     std::to_string(levels));
  const float f = float(levels);
  return ops::mul_scalar(ops::ste_round(ops::mul_scalar(tau, f)), 1.f / f);
}

Tensor hard_prefix_mask(const Tensor& tau_q, int channels) {
  const Shape& s = tau_q.shape();
  if (s.c != 1)
    throw ShapeError("hard_prefix_mask: tau must have 1 channel, got " +
                     s.str());
  Tensor out(Shape{s.n, channels, s.h, s.w});
  const float* tv = tau_q.values().data();
  float* ov = out.values().data();
  const int64_t plane = int64_t(s.h) * s.w;
  kernels::parallel_for(out.numel(), [&](int64_t i) {
    const int64_t hw = i % plane;
    const int k = int((i / plane) % channels);
    const int64_t n = i / (plane * channels);
    const long lvl = std::lround(tv[n * plane + hw] * float(channels));
    ov[i] = k < lvl ? 1.f : 0.f;
  });
  return out;
}

Tensor budget_penalty(const Tensor& tau, float budget) {
  return ops::abs(ops::add_scalar(ops::mean_all(tau), -budget));
}

}  // namespace ntc::mask
