// OpenMP kernels: same per-element math as the serial reference, with
// independent output elements distributed statically across threads.
// Falls back to the serial loops when built without OpenMP.
#include "kernels_detail.hpp"

namespace ntc::kernels {

void conv2d_forward_parallel(const Conv2dGeom& g, const float* x,
                             const float* w, const float* b, float* y) {
  const int64_t planes = int64_t(g.n) * g.out_c;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t p = 0; p < planes; ++p) {
    const int n = int(p / g.out_c);
    const int oc = int(p % g.out_c);
    float* yc = y + p * g.out_h * g.out_w;
    detailk::conv_forward_plane(g, x, w, b ? b[oc] : 0.f, n, oc, yc);
  }
}

void conv2d_grad_input_parallel(const Conv2dGeom& g, const float* w,
                                const float* gy, float* gx) {
  const int64_t planes = int64_t(g.n) * g.in_c;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t p = 0; p < planes; ++p) {
    const int n = int(p / g.in_c);
    const int ic = int(p % g.in_c);
    float* gxc = gx + p * g.in_h * g.in_w;
    detailk::conv_gx_plane(g, w, gy, n, ic, gxc);
  }
}

void conv2d_grad_weight_parallel(const Conv2dGeom& g, const float* x,
                                 const float* gy, float* gw) {
  const int64_t slots = int64_t(g.out_c) * g.in_c;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t s = 0; s < slots; ++s) {
    const int oc = int(s / g.in_c);
    const int ic = int(s % g.in_c);
    detailk::conv_gw_slot(g, x, gy, oc, ic, gw + s * g.k * g.k);
  }
}

void conv2d_grad_bias_parallel(const Conv2dGeom& g, const float* gy,
                               float* gb) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int oc = 0; oc < g.out_c; ++oc)
    gb[oc] += detailk::conv_gb_element(g, gy, oc);
}

}  // namespace ntc::kernels
