// Low-level compute kernels in serial and OpenMP-parallel variants.
//
// Both variants of every kernel use the same fixed per-element reduction
// order (channel-major, then kernel row, then kernel column), and the
// parallel variants only distribute independent output elements across
// threads, so the two backends produce bit-identical results for any
// thread count.
#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ntc::kernels {

enum class Backend { serial, parallel };

Backend active_backend();
void set_backend(Backend b);
int thread_count();

struct Conv2dGeom {
  int n = 0, in_c = 0, out_c = 0;
  int in_h = 0, in_w = 0;
  int k = 0, stride = 1, pad = 0;
  int out_h = 0, out_w = 0;
};

// Computes output dims; throws ShapeError on inconsistent arguments.
Conv2dGeom conv2d_geometry(int n, int in_c, int in_h, int in_w, int out_c,
                           int k, int stride, int pad);

// y[n,oc,oh,ow] = b[oc] + sum_{ic,kh,kw} x[n,ic,...] * w[oc,ic,kh,kw]
void conv2d_forward(const Conv2dGeom& g, const float* x, const float* w,
                    const float* b, float* y);
// gx += correlation of gy with w (gather form, one writer per element)
void conv2d_grad_input(const Conv2dGeom& g, const float* w, const float* gy,
                       float* gx);
// gw += gather over (n, oh, ow) per weight element
void conv2d_grad_weight(const Conv2dGeom& g, const float* x, const float* gy,
                        float* gw);
void conv2d_grad_bias(const Conv2dGeom& g, const float* gy, float* gb);

void conv2d_forward_serial(const Conv2dGeom& g, const float* x, const float* w,
                           const float* b, float* y);
void conv2d_forward_parallel(const Conv2dGeom& g, const float* x,
                             const float* w, const float* b, float* y);
void conv2d_grad_input_serial(const Conv2dGeom& g, const float* w,
                              const float* gy, float* gx);
void conv2d_grad_input_parallel(const Conv2dGeom& g, const float* w,
                                const float* gy, float* gx);
void conv2d_grad_weight_serial(const Conv2dGeom& g, const float* x,
                               const float* gy, float* gw);
void conv2d_grad_weight_parallel(const Conv2dGeom& g, const float* x,
                                 const float* gy, float* gw);
void conv2d_grad_bias_serial(const Conv2dGeom& g, const float* gy, float* gb);
void conv2d_grad_bias_parallel(const Conv2dGeom& g, const float* gy,
                               float* gb);

// Elementwise / permutation work: each index i is independent, so the
// parallel path is bit-identical to the serial one.
template <class F>
void parallel_for(int64_t count, F&& fn) {
#ifdef _OPENMP
  if (active_backend() == Backend::parallel) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < count; ++i) fn(i);
    return;
  }
#endif
  for (int64_t i = 0; i < count; ++i) fn(i);
}

}  // namespace ntc::kernels
