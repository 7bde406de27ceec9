#include "ntc/nn.hpp"

#include <cmath>

#include "ntc/kernels.hpp"
#include "ntc/ops.hpp"

namespace ntc::nn {

ConvLayer make_conv(std::mt19937& rng, int in_c, int out_c, int k, int stride,
                    int pad) {
  const int64_t fan_in = int64_t(in_c) * k * k;
  const float bound = std::sqrt(6.f / float(fan_in));
  std::vector<float> w(size_t(int64_t(out_c) * in_c * k * k));
  for (auto& v : w) v = bound * (2.f * uniform01(rng) - 1.f);
  ConvLayer l;
  l.w = Tensor::parameter(Shape{out_c, in_c, k, k}, std::move(w));
  l.b = Tensor::parameter(Shape{1, out_c, 1, 1},
                          std::vector<float>(size_t(out_c), 0.f));
  l.stride = stride;
  l.pad = pad;
  return l;
}

Tensor apply(const ConvLayer& l, const Tensor& x) {
  return ops::conv2d(x, l.w, l.b, l.stride, l.pad);
}

void Adam::step(std::span<const Tensor> params, float lr) {
  if (slots_.empty()) {
    slots_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      slots_[i].m.assign(size_t(params[i].numel()), 0.f);
      slots_[i].v.assign(size_t(params[i].numel()), 0.f);
    }
  }
  if (slots_.size() != params.size())
    throw ShapeError("adam: parameter list size changed between steps");
  ++t_;
  const float bc1 = float(1.0 - std::pow(double(beta1_), double(t_)));
  const float bc2 = float(1.0 - std::pow(double(beta2_), double(t_)));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i];
    auto& slot = slots_[i];
    if (slot.m.size() != size_t(p.numel()))
      throw ShapeError("adam: parameter " + std::to_string(i) +
                       " changed shape");
    auto vals = p.values();
    auto grad = p.grad();
    float* m = slot.m.data();
    float* v = slot.v.data();
    const float b1 = beta1_, b2 = beta2_, e = eps_;
    kernels::parallel_for(p.numel(), [&](int64_t j) {
      const float g = grad.empty() ? 0.f : grad[size_t(j)];
      m[j] = b1 * m[j] + (1.f - b1) * g;
      v[j] = b2 * v[j] + (1.f - b2) * g * g;
      const float mh = m[j] / bc1;
      const float vh = v[j] / bc2;
      vals[size_t(j)] -= lr * mh / (std::sqrt(vh) + e);
    });
  }
}

}  // namespace ntc::nn
