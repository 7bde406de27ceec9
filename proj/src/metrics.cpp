#include "ntc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ntc/ops.hpp"

namespace ntc::metrics {
namespace op = ntc::ops;

namespace {

constexpr float kC1 = 0.01f * 0.01f;  // (K1 * L)^2 for L = 1
constexpr float kC2 = 0.03f * 0.03f;
constexpr double kScaleWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

std::vector<float> gaussian_window(int win) {
  const double sigma = 1.5 * double(win) / 11.0;
  const double c = (win - 1) / 2.0;
  std::vector<double> k(static_cast<size_t>(win));
  double sum = 0.0;
  for (int i = 0; i < win; ++i) {
    k[size_t(i)] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    sum += k[size_t(i)];
  }
  std::vector<float> out(static_cast<size_t>(win));
  for (int i = 0; i < win; ++i) out[size_t(i)] = float(k[size_t(i)] / sum);
  return out;
}

Tensor blur(const Tensor& x, const std::vector<float>& k) {
  return op::blur1d_w(op::blur1d_h(x, k), k);
}

struct ScaleStats {
  Tensor cs_mean;    // spatial mean of the contrast-structure map
  Tensor ssim_mean;  // spatial mean of the full luminance * cs map
};

ScaleStats ssim_stats(const Tensor& a, const Tensor& b,
                      const std::vector<float>& k) {
  Tensor mu_a = blur(a, k);
  Tensor mu_b = blur(b, k);
  Tensor mu_aa = op::mul(mu_a, mu_a);
  Tensor mu_bb = op::mul(mu_b, mu_b);
  Tensor mu_ab = op::mul(mu_a, mu_b);
  Tensor var_a = op::sub(blur(op::mul(a, a), k), mu_aa);
  Tensor var_b = op::sub(blur(op::mul(b, b), k), mu_bb);
  Tensor cov = op::sub(blur(op::mul(a, b), k), mu_ab);

  // Twice-x and x-plus-x round identically, so a == b gives exactly 1.
  Tensor cs = op::div(op::add_scalar(op::mul_scalar(cov, 2.f), kC2),
                      op::add_scalar(op::add(var_a, var_b), kC2));
  Tensor lum = op::div(op::add_scalar(op::mul_scalar(mu_ab, 2.f), kC1),
                       op::add_scalar(op::add(mu_aa, mu_bb), kC1));
  return {op::mean_all(cs), op::mean_all(op::mul(lum, cs))};
}

}  // namespace

int ms_ssim_scales(int h, int w) {
  int m = 0;
  for (int d = std::min(h, w) / 16; d > 0; d >>= 1) ++m;
  return std::clamp(m, 1, 5);
}

Tensor ms_ssim(const Tensor& a, const Tensor& b) {
  const Shape s = a.shape();
  if (!(s == b.shape()))
    throw ShapeError("ms_ssim shapes differ: " + s.str() + " vs " +
                     b.shape().str());
  const int min_dim = int(std::min(s.h, s.w));
  if (min_dim < 4)
    throw ShapeError("ms_ssim needs min(h, w) >= 4, got " + s.str());

  const int scales = ms_ssim_scales(int(s.h), int(s.w));
  const int win = std::min(11, (min_dim % 2 == 0) ? min_dim - 1 : min_dim);
  const std::vector<float> kernel = gaussian_window(win);

  double wsum = 0.0;
  for (int j = 0; j < scales; ++j) wsum += kScaleWeights[j];

  Tensor x = a, y = b, result;
  for (int j = 0; j < scales; ++j) {
    ScaleStats st = ssim_stats(x, y, kernel);
    Tensor term = (j == scales - 1) ? st.ssim_mean : st.cs_mean;
    term = op::pow_scalar(op::clamp_min(term, 1e-6f),
                          float(kScaleWeights[j] / wsum));
    result = result.defined() ? op::mul(result, term) : term;
    if (j + 1 < scales) {
      x = op::avg_pool2(x);
      y = op::avg_pool2(y);
    }
  }
  return result;
}

double psnr(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape()))
    throw ShapeError("psnr shapes differ: " + a.shape().str() + " vs " +
                     b.shape().str());
  auto av = a.values(), bv = b.values();
  double mse = 0.0;
  for (size_t i = 0; i < av.size(); ++i) {
    const double d = double(av[i]) - double(bv[i]);
    mse += d * d;
  }
  mse /= double(av.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

double bpp(size_t container_bytes, int width, int height) {
  return double(container_bytes) * 8.0 / (double(width) * double(height));
}

}  // namespace ntc::metrics
