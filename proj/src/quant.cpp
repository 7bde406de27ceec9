#include "ntc/quant.hpp"

#include <cmath>

#include "ntc/kernels.hpp"

namespace ntc::quant {

using detail::Node;

Range derive_range(std::span<const float> vals) {
  if (vals.empty()) throw ShapeError("derive_range: empty sample");
  float mn = vals[0], mx = vals[0];
  for (float v : vals) {
    if (!std::isfinite(v))
      throw VerifyError("derive_range: non-finite latent values");
    mn = std::min(mn, v);
    mx = std::max(mx, v);
  }
  Range r;
  if (mn == mx) {
    r.y_min = r.y_max = mn;  // constant stored verbatim
    return r;
  }
  mn = std::min(mn, 0.f);
  mx = std::max(mx, 0.f);
  // Fixed anchor: symbol 128 dequantizes to exactly 0.0 in every frame, so a
  // masked (zeroed) position always codes the same symbol and the probability
  // model can learn it as near-certain. The step is the smallest that still
  // covers [mn, mx] with 128 levels below zero and 127 above.
  const float step = std::max(mx / 127.f, -mn / 128.f);
  r.y_min = -128.f * step;
  r.y_max = 127.f * step;
  return r;
}

Grid grid_from_range(const Range& r) {
  Grid g;
  if (r.degenerate()) return g;
  g.step = (r.y_max - r.y_min) / 255.f;
  g.z0 = int(std::lround(-r.y_min * 255.f / (r.y_max - r.y_min)));
  return g;
}

int quantize_value(float x, const Range& r, const Grid& g) {
  if (r.degenerate()) return 0;
  (void)g;
  const long q = std::lround((x - r.y_min) * 255.f / (r.y_max - r.y_min));
  return int(q < 0 ? 0 : (q > 255 ? 255 : q));
}

float dequantize_symbol(int q, const Range& r, const Grid& g) {
  if (r.degenerate()) return r.y_min;
  return float(q - g.z0) * g.step;
}

LatentQuant quantize_latent(const Tensor& y) {
  const Shape& s = y.shape();
  const int64_t per = s.numel() / s.n;
  LatentQuant out;
  out.dequantized = Tensor(s);
  out.symbols = Tensor(s);
  out.ranges.resize(size_t(s.n));
  const float* yv = y.values().data();
  float* dv = out.dequantized.values().data();
  float* qv = out.symbols.values().data();
  for (int n = 0; n < s.n; ++n) {
    const Range r = derive_range({yv + int64_t(n) * per, size_t(per)});
    const Grid g = grid_from_range(r);
    out.ranges[size_t(n)] = r;
    kernels::parallel_for(per, [&](int64_t i) {
      const int64_t o = int64_t(n) * per + i;
      const int q = quantize_value(yv[o], r, g);
      qv[o] = float(q);
      dv[o] = dequantize_symbol(q, r, g);
    });
  }
  if (grad_enabled() && y.requires_grad()) {
    auto yn = y.node();
    // dequantized: straight-through identity
    {
      auto dn = out.dequantized.node();
      Node* d = dn.get();
      dn->requires_grad = true;
      dn->parents = {yn};
      dn->backprop = [d, yn]() {
        if (d->grad.empty()) return;
        auto& gy = yn->grad_buf();
        const float* g = d->grad.data();
        kernels::parallel_for(int64_t(gy.size()),
                              [&](int64_t i) { gy[i] += g[i]; });
      };
    }
    // symbols: straight-through with the quantization slope 255/range
    {
      auto qn = out.symbols.node();
      Node* q = qn.get();
      qn->requires_grad = true;
      qn->parents = {yn};
      std::vector<float> slope(size_t(s.n));
      for (int n = 0; n < s.n; ++n) {
        const Range& r = out.ranges[size_t(n)];
        slope[size_t(n)] =
            r.degenerate() ? 0.f : 255.f / (r.y_max - r.y_min);
      }
      qn->backprop = [q, yn, slope, per]() {
        if (q->grad.empty()) return;
        auto& gy = yn->grad_buf();
        const float* g = q->grad.data();
        kernels::parallel_for(int64_t(gy.size()), [&](int64_t i) {
          gy[i] += g[i] * slope[size_t(i / per)];
        });
      };
    }
  }
  return out;
}

Tensor dequantize_latent(const Tensor& symbols, const Range& r) {
  Tensor out(symbols.shape());
  const Grid g = grid_from_range(r);
  const float* qv = symbols.values().data();
  float* ov = out.values().data();
  kernels::parallel_for(symbols.numel(), [&](int64_t i) {
    ov[i] = dequantize_symbol(int(qv[i]), r, g);
  });
  return out;
}

}  // namespace ntc::quant
