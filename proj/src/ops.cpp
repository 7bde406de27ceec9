#include "ntc/ops.hpp"

#include <cmath>
#include <cstring>
#include <utility>
#include <vector>

#include "ntc/kernels.hpp"

namespace ntc::ops {

using detail::Node;

namespace {

bool track(std::initializer_list<const Tensor*> parents) {
  if (!grad_enabled()) return false;
  for (const Tensor* p : parents)
    if (p->defined() && p->requires_grad()) return true;
  return false;
}

void attach(Tensor& out, std::vector<std::shared_ptr<Node>> parents,
            std::function<void()> backprop) {
  auto n = out.node();
  n->requires_grad = true;
  n->parents = std::move(parents);
  n->backprop = std::move(backprop);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!(a.shape() == b.shape()))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() +
                     " vs " + b.shape().str());
}

float stable_sigmoid(float t) {
  if (t >= 0.f) return 1.f / (1.f + std::exp(-t));
  const float e = std::exp(t);
  return e / (1.f + e);
}

// Unary elementwise op: fwd(x) value, dfn(x, y) local derivative.
template <class Fwd, class Dfn>
Tensor unary_op(const Tensor& x, Fwd fwd, Dfn dfn) {
  Tensor out(x.shape());
  const float* xv = x.values().data();
  float* ov = out.values().data();
  kernels::parallel_for(x.numel(), [&](int64_t i) { ov[i] = fwd(xv[i]); });
  if (track({&x})) {
    auto xn = x.node();
    Node* on = out.node().get();
    attach(out, {xn}, [on, xn, dfn]() {
      if (on->grad.empty()) return;
      auto& gx = xn->grad_buf();
      const float* g = on->grad.data();
      const float* xv2 = xn->value.data();
      const float* yv = on->value.data();
      kernels::parallel_for(int64_t(gx.size()), [&](int64_t i) {
        gx[i] += g[i] * dfn(xv2[i], yv[i]);
      });
    });
  }
  return out;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();  // (out_c, in_c, k, k)
  if (ws.h != ws.w)
    throw ShapeError("conv2d: non-square kernel " + ws.str());
  if (xs.c != ws.c)
    throw ShapeError("conv2d: input channels " + xs.str() +
                     " do not match weight " + ws.str());
  if (b.defined() && !(b.shape() == Shape{1, ws.n, 1, 1}))
    throw ShapeError("conv2d: bias " + b.shape().str() +
                     " does not match weight " + ws.str());
  const kernels::Conv2dGeom g = kernels::conv2d_geometry(
      xs.n, xs.c, xs.h, xs.w, ws.n, ws.h, stride, pad);
  Tensor out(Shape{g.n, g.out_c, g.out_h, g.out_w});
  kernels::conv2d_forward(g, x.values().data(), w.values().data(),
                          b.defined() ? b.values().data() : nullptr,
                          out.values().data());
  if (track({&x, &w, &b})) {
    auto xn = x.node();
    auto wn = w.node();
    auto bn = b.defined() ? b.node() : nullptr;
    Node* on = out.node().get();
    std::vector<std::shared_ptr<Node>> parents{xn, wn};
    if (bn) parents.push_back(bn);
    attach(out, std::move(parents), [on, xn, wn, bn, g]() {
      if (on->grad.empty()) return;
      const float* gy = on->grad.data();
      if (xn->requires_grad)
        kernels::conv2d_grad_input(g, wn->value.data(), gy,
                                   xn->grad_buf().data());
      if (wn->requires_grad)
        kernels::conv2d_grad_weight(g, xn->value.data(), gy,
                                    wn->grad_buf().data());
      if (bn && bn->requires_grad)
        kernels::conv2d_grad_bias(g, gy, bn->grad_buf().data());
    });
  }
  return out;
}

namespace {

// out(n, c, h*r+a, w*r+b) = in(n, c*r^2 + a*r + b, h, w)
void shuffle_map(const Shape& in, int r, const float* src, float* dst) {
  const int oc = in.c / (r * r);
  const int oh = in.h * r, ow = in.w * r;
  kernels::parallel_for(in.numel(), [&](int64_t i) {
    const int w = int(i % in.w);
    const int h = int((i / in.w) % in.h);
    const int c = int((i / (int64_t(in.w) * in.h)) % in.c);
    const int n = int(i / (int64_t(in.w) * in.h * in.c));
    const int cc = c / (r * r);
    const int a = (c % (r * r)) / r;
    const int bb = c % r;
    const int64_t o =
        ((int64_t(n) * oc + cc) * oh + (h * r + a)) * ow + (w * r + bb);
    dst[o] = src[i];
  });
}

void unshuffle_map(const Shape& in, int r, const float* src, float* dst) {
  // inverse of shuffle_map; in = the pre-shuffle shape, src indexed shuffled
  const int oc = in.c / (r * r);
  const int oh = in.h * r, ow = in.w * r;
  kernels::parallel_for(in.numel(), [&](int64_t i) {
    const int w = int(i % in.w);
    const int h = int((i / in.w) % in.h);
    const int c = int((i / (int64_t(in.w) * in.h)) % in.c);
    const int n = int(i / (int64_t(in.w) * in.h * in.c));
    const int cc = c / (r * r);
    const int a = (c % (r * r)) / r;
    const int bb = c % r;
    const int64_t o =
        ((int64_t(n) * oc + cc) * oh + (h * r + a)) * ow + (w * r + bb);
    dst[i] = src[o];
  });
}

}  // namespace

Tensor pixel_shuffle(const Tensor& x, int r) {
  const Shape& s = x.shape();
  if (r < 1 || s.c % (r * r) != 0)
    throw ShapeError("pixel_shuffle: channels of " + s.str() +
                     " not divisible by r^2, r=" + std::to_string(r));
  Tensor out(Shape{s.n, s.c / (r * r), s.h * r, s.w * r});
  shuffle_map(s, r, x.values().data(), out.values().data());
  if (track({&x})) {
    auto xn = x.node();
    Node* on = out.node().get();
    Shape in = s;
    attach(out, {xn}, [on, xn, in, r]() {
      if (on->grad.empty()) return;
      std::vector<float> tmp(size_t(in.numel()));
      unshuffle_map(in, r, on->grad.data(), tmp.data());
      auto& gx = xn->grad_buf();
      kernels::parallel_for(in.numel(),
                            [&](int64_t i) { gx[i] += tmp[i]; });
    });
  }
  return out;
}

Tensor pixel_unshuffle(const Tensor& x, int r) {
  const Shape& s = x.shape();
  if (r < 1 || s.h % r != 0 || s.w % r != 0)
    throw ShapeError("pixel_unshuffle: spatial dims of " + s.str() +
                     " not divisible by r=" + std::to_string(r));
  Shape os{s.n, s.c * r * r, s.h / r, s.w / r};
  Tensor out(os);
  unshuffle_map(os, r, x.values().data(), out.values().data());
  if (track({&x})) {
    auto xn = x.node();
    Node* on = out.node().get();
    attach(out, {xn}, [on, xn, os, r]() {
      if (on->grad.empty()) return;
      std::vector<float> tmp(size_t(os.numel()));
      shuffle_map(os, r, on->grad.data(), tmp.data());
      auto& gx = xn->grad_buf();
      kernels::parallel_for(os.numel(), [&](int64_t i) { gx[i] += tmp[i]; });
    });
  }
  return out;
}

Tensor leaky_relu(const Tensor& x, float slope) {
  return unary_op(
      x, [slope](float v) { return v > 0.f ? v : slope * v; },
      [slope](float v, float) { return v > 0.f ? 1.f : slope; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(x, [](float v) { return stable_sigmoid(v); },
                  [](float, float y) { return y * (1.f - y); });
}

Tensor softplus(const Tensor& x) {
  return unary_op(
      x,
      [](float v) {
        if (v > 20.f) return v;
        if (v < -20.f) return std::exp(v);
        return std::log1p(std::exp(v));
      },
      [](float v, float) { return stable_sigmoid(v); });
}

Tensor clamp(const Tensor& x, float lo, float hi) {
  return unary_op(
      x, [lo, hi](float v) { return v < lo ? lo : (v > hi ? hi : v); },
      [lo, hi](float v, float) { return (v >= lo && v <= hi) ? 1.f : 0.f; });
}

Tensor clamp_min(const Tensor& x, float lo) {
  return unary_op(x, [lo](float v) { return v < lo ? lo : v; },
                  [lo](float v, float) { return v >= lo ? 1.f : 0.f; });
}

Tensor abs(const Tensor& x) {
  return unary_op(x, [](float v) { return std::fabs(v); },
                  [](float v, float) {
                    return v > 0.f ? 1.f : (v < 0.f ? -1.f : 0.f);
                  });
}

Tensor pow_scalar(const Tensor& x, float e) {
  return unary_op(x, [e](float v) { return std::pow(v, e); },
                  [e](float v, float y) { return e * y / v; });
}

namespace {

template <class Combine, class DA, class DB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name,
                 Combine fwd, DA da, DB db) {
  require_same_shape(a, b, name);
  Tensor out(a.shape());
  const float* av = a.values().data();
  const float* bv = b.values().data();
  float* ov = out.values().data();
  kernels::parallel_for(a.numel(),
                        [&](int64_t i) { ov[i] = fwd(av[i], bv[i]); });
  if (track({&a, &b})) {
    auto an = a.node();
    auto bn = b.node();
    Node* on = out.node().get();
    attach(out, {an, bn}, [on, an, bn, da, db]() {
      if (on->grad.empty()) return;
      const float* g = on->grad.data();
      const float* av2 = an->value.data();
      const float* bv2 = bn->value.data();
      if (an->requires_grad) {
        auto& ga = an->grad_buf();
        kernels::parallel_for(int64_t(ga.size()), [&](int64_t i) {
          ga[i] += g[i] * da(av2[i], bv2[i]);
        });
      }
      if (bn->requires_grad) {
        auto& gb = bn->grad_buf();
        kernels::parallel_for(int64_t(gb.size()), [&](int64_t i) {
          gb[i] += g[i] * db(av2[i], bv2[i]);
        });
      }
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](float x, float y) { return x + y; },
      [](float, float) { return 1.f; }, [](float, float) { return 1.f; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](float x, float y) { return x - y; },
      [](float, float) { return 1.f; }, [](float, float) { return -1.f; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](float x, float y) { return x * y; },
      [](float, float y) { return y; }, [](float x, float) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "div", [](float x, float y) { return x / y; },
      [](float, float y) { return 1.f / y; },
      [](float x, float y) { return -x / (y * y); });
}

Tensor add_scalar(const Tensor& x, float s) {
  return unary_op(x, [s](float v) { return v + s; },
                  [](float, float) { return 1.f; });
}

Tensor mul_scalar(const Tensor& x, float s) {
  return unary_op(x, [s](float v) { return v * s; },
                  [s](float, float) { return s; });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.n != bs.n || as.h != bs.h || as.w != bs.w)
    throw ShapeError("concat_channels: incompatible shapes " + as.str() +
                     " vs " + bs.str());
  Shape os{as.n, as.c + bs.c, as.h, as.w};
  Tensor out(os);
  const int64_t plane = int64_t(as.h) * as.w;
  float* ov = out.values().data();
  const float* av = a.values().data();
  const float* bv = b.values().data();
  for (int n = 0; n < as.n; ++n) {
    std::memcpy(ov + (int64_t(n) * os.c) * plane, av + int64_t(n) * as.c * plane,
                size_t(as.c * plane) * sizeof(float));
    std::memcpy(ov + (int64_t(n) * os.c + as.c) * plane,
                bv + int64_t(n) * bs.c * plane,
                size_t(bs.c * plane) * sizeof(float));
  }
  if (track({&a, &b})) {
    auto an = a.node();
    auto bn = b.node();
    Node* on = out.node().get();
    attach(out, {an, bn}, [on, an, bn, as, bs, os, plane]() {
      if (on->grad.empty()) return;
      const float* g = on->grad.data();
      if (an->requires_grad && as.numel() > 0) {
        auto& ga = an->grad_buf();
        for (int n = 0; n < as.n; ++n)
          for (int64_t i = 0; i < as.c * plane; ++i)
            ga[int64_t(n) * as.c * plane + i] +=
                g[(int64_t(n) * os.c) * plane + i];
      }
      if (bn->requires_grad && bs.numel() > 0) {
        auto& gb = bn->grad_buf();
        for (int n = 0; n < bs.n; ++n)
          for (int64_t i = 0; i < bs.c * plane; ++i)
            gb[int64_t(n) * bs.c * plane + i] +=
                g[(int64_t(n) * os.c + as.c) * plane + i];
      }
    });
  }
  return out;
}

Tensor slice_channels(const Tensor& x, int c0, int c1) {
  const Shape& s = x.shape();
  if (c0 < 0 || c1 > s.c || c0 >= c1)
    throw ShapeError("slice_channels: [" + std::to_string(c0) + "," +
                     std::to_string(c1) + ") out of range for " + s.str());
  Shape os{s.n, c1 - c0, s.h, s.w};
  Tensor out(os);
  const int64_t plane = int64_t(s.h) * s.w;
  float* ov = out.values().data();
  const float* xv = x.values().data();
  for (int n = 0; n < s.n; ++n)
    std::memcpy(ov + int64_t(n) * os.c * plane,
                xv + (int64_t(n) * s.c + c0) * plane,
                size_t(os.c * plane) * sizeof(float));
  if (track({&x})) {
    auto xn = x.node();
    Node* on = out.node().get();
    attach(out, {xn}, [on, xn, s, os, c0, plane]() {
      if (on->grad.empty()) return;
      auto& gx = xn->grad_buf();
      const float* g = on->grad.data();
      for (int n = 0; n < s.n; ++n)
        for (int64_t i = 0; i < os.c * plane; ++i)
          gx[(int64_t(n) * s.c + c0) * plane + i] +=
              g[int64_t(n) * os.c * plane + i];
    });
  }
  return out;
}

Tensor crop_spatial(const Tensor& x, int h, int w) {
  const Shape& s = x.shape();
  if (h < 1 || w < 1 || h > s.h || w > s.w)
    throw ShapeError("crop_spatial: target " + std::to_string(h) + "x" +
                     std::to_string(w) + " invalid for " + s.str());
  Shape os{s.n, s.c, h, w};
  Tensor out(os);
  float* ov = out.values().data();
  const float* xv = x.values().data();
  kernels::parallel_for(os.numel(), [&](int64_t i) {
    const int ww = int(i % w);
    const int hh = int((i / w) % h);
    const int64_t nc = i / (int64_t(w) * h);
    ov[i] = xv[(nc * s.h + hh) * s.w + ww];
  });
  if (track({&x})) {
    auto xn = x.node();
    Node* on = out.node().get();
    attach(out, {xn}, [on, xn, s, os]() {
      if (on->grad.empty()) return;
      auto& gx = xn->grad_buf();
      const float* g = on->grad.data();
      kernels::parallel_for(os.numel(), [&](int64_t i) {
        const int ww = int(i % os.w);
        const int hh = int((i / os.w) % os.h);
        const int64_t nc = i / (int64_t(os.w) * os.h);
        gx[(nc * s.h + hh) * s.w + ww] += g[i];
      });
    });
  }
  return out;
}

namespace {

Tensor reduce_all(const Tensor& x, bool mean) {
  Tensor out(Shape{1, 1, 1, 1});
  // Double accumulator in a fixed serial order: deterministic and keeps the
  // scalar loss usable for finite-difference checks.
  double acc = 0.0;
  for (float v : x.values()) acc += v;
  const double denom = mean ? double(x.numel()) : 1.0;
  out.values()[0] = float(acc / denom);
  if (track({&x})) {
    auto xn = x.node();
    Node* on = out.node().get();
    attach(out, {xn}, [on, xn, denom]() {
      if (on->grad.empty()) return;
      const float g = float(on->grad[0] / denom);
      auto& gx = xn->grad_buf();
      kernels::parallel_for(int64_t(gx.size()),
                            [&](int64_t i) { gx[i] += g; });
    });
  }
  return out;
}

}  // namespace

Tensor sum_all(const Tensor& x) { return reduce_all(x, false); }
Tensor mean_all(const Tensor& x) { return reduce_all(x, true); }

Tensor softmax_channels(const Tensor& x) {
  const Shape& s = x.shape();
  Tensor out(s);
  const float* xv = x.values().data();
  float* ov = out.values().data();
  const int64_t plane = int64_t(s.h) * s.w;
  const int64_t sites = int64_t(s.n) * plane;
  kernels::parallel_for(sites, [&](int64_t i) {
    const int64_t n = i / plane;
    const int64_t hw = i % plane;
    const int64_t base = n * s.c * plane + hw;
    float mx = xv[base];
    for (int c = 1; c < s.c; ++c)
      mx = std::max(mx, xv[base + int64_t(c) * plane]);
    float denom = 0.f;
    for (int c = 0; c < s.c; ++c) {
      const float e = std::exp(xv[base + int64_t(c) * plane] - mx);
      ov[base + int64_t(c) * plane] = e;
      denom += e;
    }
    for (int c = 0; c < s.c; ++c) ov[base + int64_t(c) * plane] /= denom;
  });
  if (track({&x})) {
    auto xn = x.node();
    Node* on = out.node().get();
    attach(out, {xn}, [on, xn, s, plane, sites]() {
      if (on->grad.empty()) return;
      auto& gx = xn->grad_buf();
      const float* g = on->grad.data();
      const float* y = on->value.data();
      kernels::parallel_for(sites, [&](int64_t i) {
        const int64_t n = i / plane;
        const int64_t hw = i % plane;
        const int64_t base = n * s.c * plane + hw;
        float dot = 0.f;
        for (int c = 0; c < s.c; ++c) {
          const int64_t o = base + int64_t(c) * plane;
          dot += g[o] * y[o];
        }
        for (int c = 0; c < s.c; ++c) {
          const int64_t o = base + int64_t(c) * plane;
          gx[o] += y[o] * (g[o] - dot);
        }
      });
    });
  }
  return out;
}

namespace {

// Valid 1-D convolution along H (axis_h) or W with a fixed kernel, per channel.
Tensor blur1d(const Tensor& x, std::span<const float> kernel, bool axis_h) {
  const Shape& s = x.shape();
  const int win = int(kernel.size());
  const int oh = axis_h ? s.h - win + 1 : s.h;
  const int ow = axis_h ? s.w : s.w - win + 1;
  if (win < 1 || oh < 1 || ow < 1)
    throw ShapeError("blur1d: window " + std::to_string(win) +
                     " too large for " + s.str());
  Shape os{s.n, s.c, oh, ow};
  Tensor out(os);
  std::vector<float> k(kernel.begin(), kernel.end());
  const float* xv = x.values().data();
  float* ov = out.values().data();
  kernels::parallel_for(os.numel(), [&](int64_t i) {
    const int w = int(i % ow);
    const int h = int((i / ow) % oh);
    const int64_t nc = i / (int64_t(ow) * oh);
    const float* base = xv + (nc * s.h) * s.w;
    float acc = 0.f;
    if (axis_h)
      for (int j = 0; j < win; ++j) acc += k[j] * base[(h + j) * s.w + w];
    else
      for (int j = 0; j < win; ++j) acc += k[j] * base[h * s.w + (w + j)];
    ov[i] = acc;
  });
  if (track({&x})) {
    auto xn = x.node();
    Node* on = out.node().get();
    attach(out, {xn}, [on, xn, s, os, k, axis_h]() {
      if (on->grad.empty()) return;
      auto& gx = xn->grad_buf();
      const float* g = on->grad.data();
      const int win2 = int(k.size());
      // gather form: gx[p] = sum_j k[j] * g[p - j] over valid output indices
      kernels::parallel_for(s.numel(), [&](int64_t i) {
        const int w = int(i % s.w);
        const int h = int((i / s.w) % s.h);
        const int64_t nc = i / (int64_t(s.w) * s.h);
        const float* gbase = g + nc * os.h * os.w;
        float acc = 0.f;
        if (axis_h) {
          for (int j = 0; j < win2; ++j) {
            const int o = h - j;
            if (o >= 0 && o < os.h) acc += k[j] * gbase[int64_t(o) * os.w + w];
          }
        } else {
          for (int j = 0; j < win2; ++j) {
            const int o = w - j;
            if (o >= 0 && o < os.w) acc += k[j] * gbase[int64_t(h) * os.w + o];
          }
        }
        gx[i] += acc;
      });
    });
  }
  return out;
}

}  // namespace

Tensor blur1d_h(const Tensor& x, std::span<const float> kernel) {
  return blur1d(x, kernel, true);
}
Tensor blur1d_w(const Tensor& x, std::span<const float> kernel) {
  return blur1d(x, kernel, false);
}

Tensor avg_pool2(const Tensor& x) {
  const Shape& s = x.shape();
  const int oh = s.h / 2, ow = s.w / 2;
  if (oh < 1 || ow < 1)
    throw ShapeError("avg_pool2: input too small " + s.str());
  Shape os{s.n, s.c, oh, ow};
  Tensor out(os);
  const float* xv = x.values().data();
  float* ov = out.values().data();
  kernels::parallel_for(os.numel(), [&](int64_t i) {
    const int w = int(i % ow);
    const int h = int((i / ow) % oh);
    const int64_t nc = i / (int64_t(ow) * oh);
    const float* base = xv + nc * s.h * s.w;
    ov[i] = 0.25f * (base[(2 * h) * s.w + 2 * w] + base[(2 * h) * s.w + 2 * w + 1] +
                     base[(2 * h + 1) * s.w + 2 * w] +
                     base[(2 * h + 1) * s.w + 2 * w + 1]);
  });
  if (track({&x})) {
    auto xn = x.node();
    Node* on = out.node().get();
    attach(out, {xn}, [on, xn, s, os]() {
      if (on->grad.empty()) return;
      auto& gx = xn->grad_buf();
      const float* g = on->grad.data();
      kernels::parallel_for(os.numel(), [&](int64_t i) {
        const int w = int(i % os.w);
        const int h = int((i / os.w) % os.h);
        const int64_t nc = i / (int64_t(os.w) * os.h);
        float* base = gx.data() + nc * s.h * s.w;
        const float q = 0.25f * g[i];
        base[(2 * h) * s.w + 2 * w] += q;
        base[(2 * h) * s.w + 2 * w + 1] += q;
        base[(2 * h + 1) * s.w + 2 * w] += q;
        base[(2 * h + 1) * s.w + 2 * w + 1] += q;
      });
    });
  }
  return out;
}

Tensor ste_round(const Tensor& x) {
  // round half away from zero; straight-through backward
  return unary_op(x, [](float v) { return std::round(v); },
                  [](float, float) { return 1.f; });
}

Tensor detach(const Tensor& x) { return x.detach(); }

Tensor soft_prefix_mask(const Tensor& tau, int channels) {
  const Shape& s = tau.shape();
  if (s.c != 1)
    throw ShapeError("soft_prefix_mask: tau must have 1 channel, got " +
                     s.str());
  Shape os{s.n, channels, s.h, s.w};
  Tensor out(os);
  const float* tv = tau.values().data();
  float* ov = out.values().data();
  const int64_t plane = int64_t(s.h) * s.w;
  const float F = float(channels);
  kernels::parallel_for(os.numel(), [&](int64_t i) {
    const int64_t hw = i % plane;
    const int k = int((i / plane) % channels);
    const int64_t n = i / (plane * channels);
    const float t = F * tv[n * plane + hw] - float(k);
    ov[i] = t < 0.f ? 0.f : (t > 1.f ? 1.f : t);
  });
  if (track({&tau})) {
    auto tn = tau.node();
    Node* on = out.node().get();
    attach(out, {tn}, [on, tn, s, plane, channels, F]() {
      if (on->grad.empty()) return;
      auto& gt = tn->grad_buf();
      const float* g = on->grad.data();
      const float* tv2 = tn->value.data();
      const int64_t sites = int64_t(s.n) * plane;
      kernels::parallel_for(sites, [&](int64_t i) {
        const float t = tv2[i];
        float acc = 0.f;
        for (int k = 0; k < channels; ++k) {
          const float r = F * t - float(k);
          if (r > 0.f && r < 1.f)
            acc += F * g[(i / plane) * plane * channels + int64_t(k) * plane +
                         (i % plane)];
        }
        gt[i] += acc;
      });
    });
  }
  return out;
}

namespace {

constexpr float kMixEps = 1.f / 4096.f;         // probability-floor mixing weight
constexpr float kMixFloor = kMixEps / 256.f;    // added uniform mass, = 2^-20
constexpr float kInvLn2 = 1.4426950408889634f;  // 1/ln(2)

struct BinEval {
  float delta;  // bin mass under one logistic component
  float dmu, ds, dq;
};

// Discretized logistic bin [q-0.5, q+0.5] with tail absorption at the ends.
// Complementary form for q > mu keeps the difference of CDFs accurate in
// both tails.
BinEval logistic_bin(float q, float mu, float s, bool absorb_lo,
                     bool absorb_hi) {
  const float hi = (q + 0.5f - mu) / s;
  const float lo = (q - 0.5f - mu) / s;
  float f_hi = 1.f, f_lo = 0.f;
  if (!absorb_hi) f_hi = stable_sigmoid(hi);
  if (!absorb_lo) f_lo = stable_sigmoid(lo);
  float delta;
  if (!absorb_hi && !absorb_lo && q > mu) {
    delta = stable_sigmoid(-lo) - stable_sigmoid(-hi);
  } else {
    delta = f_hi - f_lo;
  }
  if (delta < 0.f) delta = 0.f;
  const float dp_hi = absorb_hi ? 0.f : f_hi * (1.f - f_hi);
  const float dp_lo = absorb_lo ? 0.f : f_lo * (1.f - f_lo);
  BinEval e;
  e.delta = delta;
  e.dmu = (dp_lo - dp_hi) / s;
  e.ds = (dp_lo * lo - dp_hi * hi) / s;
  e.dq = (dp_hi - dp_lo) / s;
  return e;
}

}  // namespace

Tensor logistic_mixture_bits(const Tensor& mu, const Tensor& lam,
                             const Tensor& s, const Tensor& pi,
                             const Tensor& symbols, int mixtures) {
  const Shape& ms = mu.shape();
  const Shape& zs = symbols.shape();
  const int K = mixtures;
  if (K > 16)
    throw ShapeError("logistic_mixture_bits: at most 16 mixtures supported");
  if (K < 1 || ms.c != K * zs.c)
    throw ShapeError("logistic_mixture_bits: mu " + ms.str() +
                     " does not hold K*C planes for symbols " + zs.str());
  require_same_shape(mu, lam, "logistic_mixture_bits");
  require_same_shape(mu, s, "logistic_mixture_bits");
  if (!(pi.shape() == Shape{ms.n, K, ms.h, ms.w}))
    throw ShapeError("logistic_mixture_bits: pi " + pi.shape().str() +
                     " does not match mu " + ms.str());
  if (zs.n != ms.n || zs.h != ms.h || zs.w != ms.w)
    throw ShapeError("logistic_mixture_bits: symbols " + zs.str() +
                     " do not match mu " + ms.str());

  const int C = zs.c;
  const int64_t plane = int64_t(zs.h) * zs.w;
  Tensor out(zs);
  const float* muv = mu.values().data();
  const float* lamv = lam.values().data();
  const float* sv = s.values().data();
  const float* piv = pi.values().data();
  const float* zv = symbols.values().data();
  float* ov = out.values().data();

  const auto eval_site = [&](int64_t n, int64_t hw, auto&& per_channel) {
    for (int c = 0; c < C; ++c) {
      const float q = zv[(n * C + c) * plane + hw];
      const float xprev =
          c > 0 ? (zv[(n * C + c - 1) * plane + hw] - 127.5f) / 127.5f : 0.f;
      const bool absorb_lo = q <= 0.5f;
      const bool absorb_hi = q >= 254.5f;
      per_channel(n, hw, c, q, xprev, absorb_lo, absorb_hi);
    }
  };

  const int64_t sites = int64_t(zs.n) * plane;
  kernels::parallel_for(sites, [&](int64_t site) {
    const int64_t n = site / plane;
    const int64_t hw = site % plane;
    eval_site(n, hw, [&](int64_t n2, int64_t hw2, int c, float q, float xprev,
                         bool alo, bool ahi) {
      float p = 0.f;
      for (int k = 0; k < K; ++k) {
        const int64_t pk = (n2 * K + k) * plane + hw2;
        const int64_t mk = (n2 * (K * C) + int64_t(k) * C + c) * plane + hw2;
        const float mean =
            c > 0 ? muv[mk] + lamv[mk] * xprev : muv[mk];
        p += piv[pk] * logistic_bin(q, mean, sv[mk], alo, ahi).delta;
      }
      const float pf = (1.f - kMixEps) * p + kMixFloor;
      ov[(n2 * C + c) * plane + hw2] = -std::log(pf) * kInvLn2;
    });
  });

  if (track({&mu, &lam, &s, &pi, &symbols})) {
    auto mun = mu.node();
    auto lamn = lam.node();
    auto sn = s.node();
    auto pin = pi.node();
    auto zn = symbols.node();
    Node* on = out.node().get();
    attach(out, {mun, lamn, sn, pin, zn}, [=]() {
      if (on->grad.empty()) return;
      const float* g = on->grad.data();
      float* gmu = mun->requires_grad ? mun->grad_buf().data() : nullptr;
      float* glam = lamn->requires_grad ? lamn->grad_buf().data() : nullptr;
      float* gs = sn->requires_grad ? sn->grad_buf().data() : nullptr;
      float* gpi = pin->requires_grad ? pin->grad_buf().data() : nullptr;
      float* gz = zn->requires_grad ? zn->grad_buf().data() : nullptr;
      const float* muv2 = mun->value.data();
      const float* lamv2 = lamn->value.data();
      const float* sv2 = sn->value.data();
      const float* piv2 = pin->value.data();
      const float* zv2 = zn->value.data();
      // Parallel over sites; channels stay serial inside a site because the
      // context term writes the previous channel's symbol gradient.
      kernels::parallel_for(sites, [&](int64_t site) {
        const int64_t n = site / plane;
        const int64_t hw = site % plane;
        for (int c = 0; c < C; ++c) {
          const int64_t zi = (n * C + c) * plane + hw;
          const float q = zv2[zi];
          const float xprev =
              c > 0 ? (zv2[zi - plane] - 127.5f) / 127.5f : 0.f;
          const bool alo = q <= 0.5f;
          const bool ahi = q >= 254.5f;
          float p = 0.f;
          BinEval ev[16];  // K <= 16 enforced below
          float means[16];
          for (int k = 0; k < K; ++k) {
            const int64_t mk = (n * (K * C) + int64_t(k) * C + c) * plane + hw;
            means[k] = c > 0 ? muv2[mk] + lamv2[mk] * xprev : muv2[mk];
            ev[k] = logistic_bin(q, means[k], sv2[mk], alo, ahi);
            p += piv2[(n * K + k) * plane + hw] * ev[k].delta;
          }
          const float pf = (1.f - kMixEps) * p + kMixFloor;
          const float phi = -g[zi] * (1.f - kMixEps) * kInvLn2 / pf;
          for (int k = 0; k < K; ++k) {
            const int64_t pk = (n * K + k) * plane + hw;
            const int64_t mk = (n * (K * C) + int64_t(k) * C + c) * plane + hw;
            const float pik = piv2[pk];
            if (gpi) gpi[pk] += phi * ev[k].delta;
            if (gmu) gmu[mk] += phi * pik * ev[k].dmu;
            if (c > 0 && glam) glam[mk] += phi * pik * ev[k].dmu * xprev;
            if (gs) gs[mk] += phi * pik * ev[k].ds;
            if (gz) {
              gz[zi] += phi * pik * ev[k].dq;
              if (c > 0)
                gz[zi - plane] +=
                    phi * pik * ev[k].dmu * lamv2[mk] / 127.5f;
            }
          }
        }
      });
    });
  }
  return out;
}

}  // namespace ntc::ops
