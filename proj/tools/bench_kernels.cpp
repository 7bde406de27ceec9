// Times the serial and OpenMP convolution kernels on codec-shaped work and
// verifies the two backends agree bit for bit on every run.
#include <cstdio>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ntc/kernels.hpp"
#include "ntc/networks.hpp"
#include "ntc/ops.hpp"
#include "ntc/tensor.hpp"

namespace {

using namespace ntc;
using kernels::Conv2dGeom;

std::vector<float> random_values(size_t count, uint32_t seed) {
  std::mt19937 rng(seed);
  std::vector<float> v(count);
  for (auto& x : v) x = float(rng() >> 8) * 0x1p-24f - 0.5f;
  return v;
}

double time_ms(int reps, const std::function<void()>& fn) {
  fn();  // warm-up, and the first run populates caches
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

bool equal(const std::vector<float>& a, const std::vector<float>& b) {
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

struct Case {
  const char* name;
  Conv2dGeom g;
};

void bench_conv(const Case& c, int reps, bool* all_equal) {
  const Conv2dGeom& g = c.g;
  std::vector<float> x = random_values(size_t(g.n) * g.in_c * g.in_h * g.in_w, 1);
  std::vector<float> w =
      random_values(size_t(g.out_c) * g.in_c * g.k * g.k, 2);
  std::vector<float> b = random_values(size_t(g.out_c), 3);
  std::vector<float> gy =
      random_values(size_t(g.n) * g.out_c * g.out_h * g.out_w, 4);

  std::vector<float> ys(size_t(g.n) * g.out_c * g.out_h * g.out_w);
  std::vector<float> yp = ys;
  const double fwd_s =
      time_ms(reps, [&] { kernels::conv2d_forward_serial(g, x.data(), w.data(),
                                                         b.data(), ys.data()); });
  const double fwd_p = time_ms(reps, [&] {
    kernels::conv2d_forward_parallel(g, x.data(), w.data(), b.data(),
                                     yp.data());
  });
  *all_equal = *all_equal && equal(ys, yp);

  std::vector<float> gxs(x.size()), gxp(x.size());
  const double gin_s = time_ms(reps, [&] {
    gxs.assign(gxs.size(), 0.f);
    kernels::conv2d_grad_input_serial(g, w.data(), gy.data(), gxs.data());
  });
  const double gin_p = time_ms(reps, [&] {
    gxp.assign(gxp.size(), 0.f);
    kernels::conv2d_grad_input_parallel(g, w.data(), gy.data(), gxp.data());
  });
  *all_equal = *all_equal && equal(gxs, gxp);

  std::vector<float> gws(w.size()), gwp(w.size());
  const double gw_s = time_ms(reps, [&] {
    gws.assign(gws.size(), 0.f);
    kernels::conv2d_grad_weight_serial(g, x.data(), gy.data(), gws.data());
  });
  const double gw_p = time_ms(reps, [&] {
    gwp.assign(gwp.size(), 0.f);
    kernels::conv2d_grad_weight_parallel(g, x.data(), gy.data(), gwp.data());
  });
  *all_equal = *all_equal && equal(gws, gwp);

  std::printf("%-22s fwd %8.3f /%8.3f ms (x%.2f)   dX %8.3f /%8.3f ms "
              "(x%.2f)   dW %8.3f /%8.3f ms (x%.2f)\n",
              c.name, fwd_s, fwd_p, fwd_s / fwd_p, gin_s, gin_p, gin_s / gin_p,
              gw_s, gw_p, gw_s / gw_p);
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 5;
  if (argc > 1) reps = std::max(1, std::atoi(argv[1]));
  std::printf("threads available: %d; columns are serial / parallel "
              "(speedup), %d reps\n",
              kernels::thread_count(), reps);

  const Case cases[] = {
      {"embed 3->20 s2 256px", kernels::conv2d_geometry(1, 3, 256, 256, 20, 3, 2, 1)},
      {"embed 20->40 s2", kernels::conv2d_geometry(1, 20, 128, 128, 40, 3, 2, 1)},
      {"trunk 40->40 64px", kernels::conv2d_geometry(1, 40, 64, 64, 40, 3, 1, 1)},
      {"latent 80->40 32px", kernels::conv2d_geometry(1, 80, 32, 32, 40, 3, 1, 1)},
      {"upsample 40->320", kernels::conv2d_geometry(1, 40, 64, 64, 320, 3, 1, 1)},
      {"batch8 crop64 40ch", kernels::conv2d_geometry(8, 40, 16, 16, 40, 3, 1, 1)},
  };

  bool all_equal = true;
  for (const Case& c : cases) bench_conv(c, reps, &all_equal);

  if (!all_equal) {
    std::printf("BACKEND MISMATCH: serial and parallel kernels disagree\n");
    return 1;
  }
  std::printf("serial and parallel outputs identical on every case\n");
  return 0;
}
