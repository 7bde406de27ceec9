// Shared per-plane kernel math. Both the serial and the parallel backend
// loop drivers call these, so a single definition guarantees the fixed
// reduction order (channel-major, kernel row, kernel column) and therefore
// bit-identical results across backends and thread counts.
//
// Every fast path below iterates exactly the in-bounds subset of the
// reference iteration space, in the reference order; out-of-bounds
// iterations never contributed an addition, so hoisting the bounds checks
// into loop ranges leaves each output's floating-point sum bit-identical.
// The <KT> instantiations only fix the kernel size at compile time.
#pragma once

#include <algorithm>
#include <cstdint>

#include "ntc/kernels.hpp"

namespace ntc::kernels::detailk {

// Range of output positions whose kernel window lies fully inside [0, n).
inline void full_window_range(int n, int k, int stride, int pad, int out_n,
                              int* lo, int* hi) {
  int l = pad <= 0 ? 0 : (pad + stride - 1) / stride;
  const int t = n - k + pad;
  int h = t < 0 ? 0 : t / stride + 1;
  h = std::min(h, out_n);
  l = std::min(l, h);
  *lo = l;
  *hi = h;
}

// One output element with precomputed kernel-row range; clips columns here.
template <int KT>
inline float conv_out_clipped(const Conv2dGeom& g, const float* xn,
                              const float* wo, int ih0, int ow, int kh_lo,
                              int kh_hi) {
  const int k = KT > 0 ? KT : g.k;
  const int iw0 = ow * g.stride - g.pad;
  const int kw_lo = iw0 < 0 ? -iw0 : 0;
  const int kw_hi = std::min(k, g.in_w - iw0);
  const int64_t in_hw = int64_t(g.in_h) * g.in_w;
  float acc = 0.f;
  for (int ic = 0; ic < g.in_c; ++ic) {
    const float* xc = xn + ic * in_hw;
    const float* wc = wo + ic * k * k;
    for (int kh = kh_lo; kh < kh_hi; ++kh) {
      const float* xrow = xc + int64_t(ih0 + kh) * g.in_w;
      const float* wrow = wc + kh * k;
      for (int kw = kw_lo; kw < kw_hi; ++kw) acc += xrow[iw0 + kw] * wrow[kw];
    }
  }
  return acc;
}

template <int KT>
inline void conv_forward_plane_t(const Conv2dGeom& g, const float* x,
                                 const float* w, float bias, int n, int oc,
                                 float* yc) {
  const int k = KT > 0 ? KT : g.k;
  int oh_full_lo, oh_full_hi, ow_full_lo, ow_full_hi;
  full_window_range(g.in_h, k, g.stride, g.pad, g.out_h, &oh_full_lo,
                    &oh_full_hi);
  full_window_range(g.in_w, k, g.stride, g.pad, g.out_w, &ow_full_lo,
                    &ow_full_hi);
  const int64_t in_hw = int64_t(g.in_h) * g.in_w;
  const float* xn = x + int64_t(n) * g.in_c * in_hw;
  const float* wo = w + int64_t(oc) * g.in_c * k * k;
  for (int oh = 0; oh < g.out_h; ++oh) {
    const int ih0 = oh * g.stride - g.pad;
    const int kh_lo = ih0 < 0 ? -ih0 : 0;
    const int kh_hi = std::min(k, g.in_h - ih0);
    float* yrow = yc + int64_t(oh) * g.out_w;
    const bool row_full = oh >= oh_full_lo && oh < oh_full_hi;
    int ow = 0;
    for (const int stop = row_full ? ow_full_lo : g.out_w; ow < stop; ++ow)
      yrow[ow] = bias + conv_out_clipped<KT>(g, xn, wo, ih0, ow, kh_lo, kh_hi);
    if (!row_full) continue;
    for (; ow < ow_full_hi; ++ow) {
      const int iw0 = ow * g.stride - g.pad;
      float acc = 0.f;
      for (int ic = 0; ic < g.in_c; ++ic) {
        const float* xw = xn + ic * in_hw + int64_t(ih0) * g.in_w + iw0;
        const float* wc = wo + ic * k * k;
        for (int kh = 0; kh < k; ++kh) {
          const float* xrow = xw + int64_t(kh) * g.in_w;
          const float* wrow = wc + kh * k;
          for (int kw = 0; kw < k; ++kw) acc += xrow[kw] * wrow[kw];
        }
      }
      yrow[ow] = bias + acc;
    }
    for (; ow < g.out_w; ++ow)
      yrow[ow] = bias + conv_out_clipped<KT>(g, xn, wo, ih0, ow, kh_lo, kh_hi);
  }
}

inline void conv_forward_plane(const Conv2dGeom& g, const float* x,
                               const float* w, float bias, int n, int oc,
                               float* yc) {
  if (g.k == 3)
    conv_forward_plane_t<3>(g, x, w, bias, n, oc, yc);
  else if (g.k == 1)
    conv_forward_plane_t<1>(g, x, w, bias, n, oc, yc);
  else
    conv_forward_plane_t<0>(g, x, w, bias, n, oc, yc);
}

// Stride-1 input gradient: element with precomputed kernel-row range.
template <int KT>
inline float conv_gx_clipped_s1(const Conv2dGeom& g, const float* w,
                                const float* gyn, int ic, int ih, int iw,
                                int kh_lo, int kh_hi) {
  const int k = KT > 0 ? KT : g.k;
  const int iwp = iw + g.pad;
  const int kw_lo = std::max(0, iwp - g.out_w + 1);
  const int kw_hi = std::min(k, iwp + 1);
  const int64_t out_hw = int64_t(g.out_h) * g.out_w;
  float acc = 0.f;
  for (int oc = 0; oc < g.out_c; ++oc) {
    const float* gyc = gyn + oc * out_hw;
    const float* wc = w + (int64_t(oc) * g.in_c + ic) * k * k;
    for (int kh = kh_lo; kh < kh_hi; ++kh) {
      const float* gyrow = gyc + int64_t(ih + g.pad - kh) * g.out_w;
      const float* wrow = wc + kh * k;
      for (int kw = kw_lo; kw < kw_hi; ++kw) acc += wrow[kw] * gyrow[iwp - kw];
    }
  }
  return acc;
}

template <int KT>
inline void conv_gx_plane_s1_t(const Conv2dGeom& g, const float* w,
                               const float* gy, int n, int ic, float* gxc) {
  const int k = KT > 0 ? KT : g.k;
  // Input positions whose full kernel fan-in lies inside the output grid.
  const int ih_full_lo = std::min(g.in_h, std::max(0, k - 1 - g.pad));
  const int ih_full_hi =
      std::max(ih_full_lo, std::min(g.in_h, g.out_h - g.pad));
  const int iw_full_lo = std::min(g.in_w, std::max(0, k - 1 - g.pad));
  const int iw_full_hi =
      std::max(iw_full_lo, std::min(g.in_w, g.out_w - g.pad));
  const int64_t out_hw = int64_t(g.out_h) * g.out_w;
  const float* gyn = gy + int64_t(n) * g.out_c * out_hw;
  for (int ih = 0; ih < g.in_h; ++ih) {
    const int kh_lo = std::max(0, ih + g.pad - g.out_h + 1);
    const int kh_hi = std::min(k, ih + g.pad + 1);
    float* gxrow = gxc + int64_t(ih) * g.in_w;
    const bool row_full = ih >= ih_full_lo && ih < ih_full_hi;
    int iw = 0;
    for (const int stop = row_full ? iw_full_lo : g.in_w; iw < stop; ++iw)
      gxrow[iw] += conv_gx_clipped_s1<KT>(g, w, gyn, ic, ih, iw, kh_lo, kh_hi);
    if (!row_full) continue;
    for (; iw < iw_full_hi; ++iw) {
      float acc = 0.f;
      for (int oc = 0; oc < g.out_c; ++oc) {
        const float* gybase =
            gyn + oc * out_hw + int64_t(ih + g.pad) * g.out_w + (iw + g.pad);
        const float* wc = w + (int64_t(oc) * g.in_c + ic) * k * k;
        for (int kh = 0; kh < k; ++kh) {
          const float* gyrow = gybase - int64_t(kh) * g.out_w;
          const float* wrow = wc + kh * k;
          for (int kw = 0; kw < k; ++kw) acc += wrow[kw] * gyrow[-kw];
        }
      }
      gxrow[iw] += acc;
    }
    for (; iw < g.in_w; ++iw)
      gxrow[iw] += conv_gx_clipped_s1<KT>(g, w, gyn, ic, ih, iw, kh_lo, kh_hi);
  }
}

// General-stride input gradient element (reference form).
inline float conv_gx_element(const Conv2dGeom& g, const float* w,
                             const float* gy, int n, int ic, int ih, int iw) {
  float acc = 0.f;
  for (int oc = 0; oc < g.out_c; ++oc) {
    const float* gyc = gy + (int64_t(n) * g.out_c + oc) * g.out_h * g.out_w;
    const float* wc = w + (int64_t(oc) * g.in_c + ic) * g.k * g.k;
    for (int kh = 0; kh < g.k; ++kh) {
      const int oh_num = ih + g.pad - kh;
      if (oh_num < 0 || oh_num % g.stride != 0) continue;
      const int oh = oh_num / g.stride;
      if (oh >= g.out_h) continue;
      for (int kw = 0; kw < g.k; ++kw) {
        const int ow_num = iw + g.pad - kw;
        if (ow_num < 0 || ow_num % g.stride != 0) continue;
        const int ow = ow_num / g.stride;
        if (ow >= g.out_w) continue;
        acc += wc[kh * g.k + kw] * gyc[int64_t(oh) * g.out_w + ow];
      }
    }
  }
  return acc;
}

inline void conv_gx_plane(const Conv2dGeom& g, const float* w, const float* gy,
                          int n, int ic, float* gxc) {
  if (g.stride == 1) {
    if (g.k == 3)
      conv_gx_plane_s1_t<3>(g, w, gy, n, ic, gxc);
    else if (g.k == 1)
      conv_gx_plane_s1_t<1>(g, w, gy, n, ic, gxc);
    else
      conv_gx_plane_s1_t<0>(g, w, gy, n, ic, gxc);
    return;
  }
  for (int ih = 0; ih < g.in_h; ++ih)
    for (int iw = 0; iw < g.in_w; ++iw)
      gxc[int64_t(ih) * g.in_w + iw] += conv_gx_element(g, w, gy, n, ic, ih, iw);
}

// Weight gradient for one (oc, ic) slot: per weight, a dot product of the
// in-bounds input window rows with the output-gradient rows.
template <int KT>
inline void conv_gw_slot_t(const Conv2dGeom& g, const float* x,
                           const float* gy, int oc, int ic, float* gws) {
  const int k = KT > 0 ? KT : g.k;
  const int64_t in_hw = int64_t(g.in_h) * g.in_w;
  const int64_t out_hw = int64_t(g.out_h) * g.out_w;
  for (int kh = 0; kh < k; ++kh) {
    const int a = g.pad - kh;
    const int oh_lo = a <= 0 ? 0 : (a + g.stride - 1) / g.stride;
    const int t = g.in_h - 1 + g.pad - kh;
    const int oh_hi = t < 0 ? 0 : std::min(g.out_h, t / g.stride + 1);
    for (int kw = 0; kw < k; ++kw) {
      const int b = g.pad - kw;
      const int ow_lo = b <= 0 ? 0 : (b + g.stride - 1) / g.stride;
      const int u = g.in_w - 1 + g.pad - kw;
      const int ow_hi = u < 0 ? 0 : std::min(g.out_w, u / g.stride + 1);
      const int iw_off = kw - g.pad;
      float acc = 0.f;
      for (int n = 0; n < g.n; ++n) {
        const float* xc = x + (int64_t(n) * g.in_c + ic) * in_hw;
        const float* gyc = gy + (int64_t(n) * g.out_c + oc) * out_hw;
        for (int oh = oh_lo; oh < oh_hi; ++oh) {
          const float* xrow =
              xc + int64_t(oh * g.stride - g.pad + kh) * g.in_w;
          const float* gyrow = gyc + int64_t(oh) * g.out_w;
          if (g.stride == 1) {
            for (int ow = ow_lo; ow < ow_hi; ++ow)
              acc += xrow[ow + iw_off] * gyrow[ow];
          } else {
            for (int ow = ow_lo; ow < ow_hi; ++ow)
              acc += xrow[int64_t(ow) * g.stride + iw_off] * gyrow[ow];
          }
        }
      }
      gws[kh * k + kw] += acc;
    }
  }
}

inline void conv_gw_slot(const Conv2dGeom& g, const float* x, const float* gy,
                         int oc, int ic, float* gws) {
  if (g.k == 3)
    conv_gw_slot_t<3>(g, x, gy, oc, ic, gws);
  else if (g.k == 1)
    conv_gw_slot_t<1>(g, x, gy, oc, ic, gws);
  else
    conv_gw_slot_t<0>(g, x, gy, oc, ic, gws);
}

inline float conv_gb_element(const Conv2dGeom& g, const float* gy, int oc) {
  float acc = 0.f;
  for (int n = 0; n < g.n; ++n) {
    const float* gyc = gy + (int64_t(n) * g.out_c + oc) * g.out_h * g.out_w;
    for (int64_t i = 0; i < int64_t(g.out_h) * g.out_w; ++i) acc += gyc[i];
  }
  return acc;
}

}  // namespace ntc::kernels::detailk
