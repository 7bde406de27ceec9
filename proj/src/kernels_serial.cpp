// Serial reference kernels plus backend dispatch.
#include <atomic>
#include <string>

#include "kernels_detail.hpp"
#include "ntc/tensor.hpp"

namespace ntc::kernels {

namespace {
#ifdef _OPENMP
std::atomic<Backend> g_backend{Backend::parallel};
#else
std::atomic<Backend> g_backend{Backend::serial};
#endif
}  // namespace

Backend active_backend() { return g_backend.load(std::memory_order_relaxed); }
void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }

int thread_count() {
#ifdef _OPENMP
  return active_backend() == Backend::parallel ? omp_get_max_threads() : 1;
#else
  return 1;
#endif
}

Conv2dGeom conv2d_geometry(int n, int in_c, int in_h, int in_w, int out_c,
                           int k, int stride, int pad) {
  if (n < 1 || in_c < 1 || in_h < 1 || in_w < 1 || out_c < 1 || k < 1 ||
      stride < 1 || pad < 0)
    throw ShapeError("conv2d: bad geometry n=" + std::to_string(n) +
                     " c=" + std::to_string(in_c) +
                     " h=" + std::to_string(in_h) +
                     " w=" + std::to_string(in_w) + " k=" + std::to_string(k));
  Conv2dGeom g;
  g.n = n;
  g.in_c = in_c;
  g.out_c = out_c;
  g.in_h = in_h;
  g.in_w = in_w;
  g.k = k;
  g.stride = stride;
  g.pad = pad;
  g.out_h = (in_h + 2 * pad - k) / stride + 1;
  g.out_w = (in_w + 2 * pad - k) / stride + 1;
  if (g.out_h < 1 || g.out_w < 1)
    throw ShapeError("conv2d: empty output for input " + std::to_string(in_h) +
                     "x" + std::to_string(in_w) + " k=" + std::to_string(k) +
                     " stride=" + std::to_string(stride) +
                     " pad=" + std::to_string(pad));
  return g;
}

void conv2d_forward_serial(const Conv2dGeom& g, const float* x, const float* w,
                           const float* b, float* y) {
  for (int n = 0; n < g.n; ++n)
    for (int oc = 0; oc < g.out_c; ++oc) {
      float* yc = y + (int64_t(n) * g.out_c + oc) * g.out_h * g.out_w;
      detailk::conv_forward_plane(g, x, w, b ? b[oc] : 0.f, n, oc, yc);
    }
}

void conv2d_grad_input_serial(const Conv2dGeom& g, const float* w,
                              const float* gy, float* gx) {
  for (int n = 0; n < g.n; ++n)
    for (int ic = 0; ic < g.in_c; ++ic) {
      float* gxc = gx + (int64_t(n) * g.in_c + ic) * g.in_h * g.in_w;
      detailk::conv_gx_plane(g, w, gy, n, ic, gxc);
    }
}

void conv2d_grad_weight_serial(const Conv2dGeom& g, const float* x,
                               const float* gy, float* gw) {
  for (int oc = 0; oc < g.out_c; ++oc)
    for (int ic = 0; ic < g.in_c; ++ic)
      detailk::conv_gw_slot(
          g, x, gy, oc, ic,
          gw + (int64_t(oc) * g.in_c + ic) * g.k * g.k);
}

void conv2d_grad_bias_serial(const Conv2dGeom& g, const float* gy, float* gb) {
  for (int oc = 0; oc < g.out_c; ++oc)
    gb[oc] += detailk::conv_gb_element(g, gy, oc);
}

void conv2d_forward(const Conv2dGeom& g, const float* x, const float* w,
                    const float* b, float* y) {
  if (active_backend() == Backend::parallel)
    conv2d_forward_parallel(g, x, w, b, y);
  else
    conv2d_forward_serial(g, x, w, b, y);
}

void conv2d_grad_input(const Conv2dGeom& g, const float* w, const float* gy,
                       float* gx) {
  if (active_backend() == Backend::parallel)
    conv2d_grad_input_parallel(g, w, gy, gx);
  else
    conv2d_grad_input_serial(g, w, gy, gx);
}

void conv2d_grad_weight(const Conv2dGeom& g, const float* x, const float* gy,
                        float* gw) {
  if (active_backend() == Backend::parallel)
    conv2d_grad_weight_parallel(g, x, gy, gw);
  else
    conv2d_grad_weight_serial(g, x, gy, gw);
}

void conv2d_grad_bias(const Conv2dGeom& g, const float* gy, float* gb) {
  if (active_backend() == Backend::parallel)
    conv2d_grad_bias_parallel(g, gy, gb);
  else
    conv2d_grad_bias_serial(g, gy, gb);
}

}  // namespace ntc::kernels
