// End-to-end acceptance gate: ten release criteria, one pass/fail line each.
//
// Criteria 7 and 8 train two full models on a synthetic toy set (serial
// backend, one core); expect the binary to run for roughly half an hour.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "ntc/coder.hpp"
#include "ntc/container.hpp"
#include "ntc/kernels.hpp"
#include "ntc/mask.hpp"
#include "ntc/metrics.hpp"
#include "ntc/msprob.hpp"
#include "ntc/networks.hpp"
#include "ntc/ops.hpp"
#include "ntc/pipeline.hpp"
#include "ntc/synth.hpp"
#include "ntc/tensor.hpp"
#include "ntc/train.hpp"
#include "test_util.hpp"

using namespace ntc;
namespace op = ntc::ops;
using ntc::testing::random_tensor;

namespace {

struct Criterion {
  int id;
  const char* name;
  bool ok = true;
  std::string detail;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

  Criterion(int id_, const char* name_) : id(id_), name(name_) {}

  void require(bool cond, const std::string& what) {
    if (cond) return;
    ok = false;
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
  void note(const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         t0)
        .count();
  }
  void report() const {
    std::printf("criterion %2d  %-26s %s  (%.1f s%s%s)\n", id, name,
                ok ? "PASS" : "FAIL", seconds(), detail.empty() ? "" : "; ",
                detail.c_str());
    std::fflush(stdout);
  }
};

bool same_bits(const Tensor& a, const Tensor& b) {
  if (!a.defined() || !b.defined()) return false;
  if (!(a.shape() == b.shape())) return false;
  return std::memcmp(a.values().data(), b.values().data(),
                     size_t(a.numel()) * sizeof(float)) == 0;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// Parameter tensor with caller-generated values.
template <class Gen>
Tensor make_param(Shape s, Gen&& gen) {
  std::vector<float> vals(static_cast<size_t>(s.numel()));
  for (auto& v : vals) v = gen();
  return Tensor::parameter(s, std::move(vals));
}

Tensor random_symbol_tensor(Shape s, std::mt19937& rng) {
  Tensor t(s, 0.f);
  for (auto& v : t.values()) v = float(rng() % 256);
  return t;
}

// Directional central-difference probe. Each trial draws a random +-1
// direction over every element of every parameter (biased 3:1 toward the
// analytic gradient's sign so the directional derivative stays large),
// steps all parameters by +-h along it, and compares the difference
// quotient with the analytic g.v. Per-element probes of a summed float32
// loss drown in the loss's own rounding noise; the directional derivative
// grows with the parameter count and stays well clear of it.
struct FdResult {
  int checked = 0;
  int failed = 0;
  double worst = 0;  // max err/tol
};

template <class MakeLoss>
FdResult fd_probe(MakeLoss&& make_loss, const std::vector<Tensor>& params,
                  uint32_t seed, float h = 1e-2f, int probes = 24,
                  float rel_tol = 1e-3f, float abs_floor = 2e-4f) {
  FdResult r;
  for (Tensor p : params) p.zero_grad();
  backward(make_loss());
  std::vector<std::vector<float>> grad, base;
  for (const Tensor& p : params) {
    grad.emplace_back(p.grad().begin(), p.grad().end());
    base.emplace_back(p.values().begin(), p.values().end());
  }
  std::mt19937 rng(seed);
  NoGradGuard guard;
  std::vector<std::vector<float>> dir(params.size());
  const auto move_to = [&](float offset) {
    for (size_t t = 0; t < params.size(); ++t) {
      Tensor p = params[t];  // by value: shares storage, mutable view
      auto vals = p.values();
      for (size_t i = 0; i < vals.size(); ++i)
        vals[i] = base[t][i] + offset * dir[t][i];
    }
  };
  for (int probe = 0; probe < probes; ++probe) {
    double an = 0;
    for (size_t t = 0; t < params.size(); ++t) {
      dir[t].resize(base[t].size());
      for (size_t i = 0; i < dir[t].size(); ++i) {
        const float toward = grad[t][i] < 0.f ? -1.f : 1.f;
        dir[t][i] = (rng() % 4u) ? toward : -toward;
        an += double(grad[t][i]) * double(dir[t][i]);
      }
    }
    move_to(h);
    const double up = make_loss().item();
    move_to(-h);
    const double dn = make_loss().item();
    const double fd = (up - dn) / (2.0 * double(h));
    const double tol =
        double(abs_floor) +
        double(rel_tol) * std::max(std::fabs(fd), std::fabs(an));
    ++r.checked;
    if (std::fabs(fd - an) > tol) ++r.failed;
    r.worst = std::max(r.worst, std::fabs(fd - an) / tol);
  }
  move_to(0.f);  // restore
  return r;
}

// Shared toy-set training for criteria 7 and 8: one full model and one
// no-importance model, identical data, seeds, steps, and schedules.
struct ToyRuns {
  train::EvalResult full_eval, noimp_eval;
  std::vector<train::StepStats> full_stats;
  double full_train_seconds = 0;
  double noimp_train_seconds = 0;
};

const ToyRuns& toy_runs() {
  static const ToyRuns runs = [] {
    ToyRuns r;
    namespace fs = std::filesystem;
    fs::remove_all("acceptance_toy");
    const std::string manifest =
        synth::write_dataset("acceptance_toy", 200, 77, 32, 32);

    train::TrainConfig cfg;
    cfg.steps = 2000;
    cfg.batch = 8;
    cfg.crop = 32;
    cfg.seed = 1;

    const auto prev_backend = kernels::active_backend();
    kernels::set_backend(kernels::Backend::serial);
    using clock = std::chrono::steady_clock;
    {
      std::printf("criterion  7  training the full model (2000 steps, one "
                  "core)...\n");
      std::fflush(stdout);
      std::mt19937 rng(uint32_t(cfg.seed));
      net::CodecModel m(rng, net::ModelConfig{});
      const auto t0 = clock::now();
      auto fit = train::fit(m, manifest, cfg, nullptr, nullptr);
      r.full_train_seconds =
          std::chrono::duration<double>(clock::now() - t0).count();
      r.full_stats = std::move(fit.stats);
      r.full_eval = train::evaluate(m, manifest, nullptr);
    }
    {
      std::printf("criterion  8  training the no-importance model (matched "
                  "steps)...\n");
      std::fflush(stdout);
      std::mt19937 rng(uint32_t(cfg.seed));
      net::ModelConfig mc;
      mc.use_importance = false;
      net::CodecModel m(rng, mc);
      const auto t0 = clock::now();
      train::fit(m, manifest, cfg, nullptr, nullptr);
      r.noimp_train_seconds =
          std::chrono::duration<double>(clock::now() - t0).count();
      r.noimp_eval = train::evaluate(m, manifest, nullptr);
    }
    kernels::set_backend(prev_backend);
    return r;
  }();
  return runs;
}

}  // namespace

TEST_CASE("criterion 1: entropy coding round trip") {
  Criterion c(1, "entropy round trip");
  std::mt19937 rng(4242);

  // 10,000 random (PMF, symbol sequence) pairs through the raw coder.
  for (int it = 0; it < 10000 && c.ok; ++it) {
    std::vector<double> pmf(256, 0.0);
    switch (it % 3) {
      case 0:
        for (auto& p : pmf) p = double(rng()) / double(rng.max());
        break;
      case 1: {
        const double center = double(rng() % 256);
        const double width =
            std::exp(std::log(0.5) +
                     (std::log(20.0) - std::log(0.5)) *
                         (double(rng() % 1000) / 999.0));
        for (int i = 0; i < 256; ++i)
          pmf[size_t(i)] = std::exp(-std::fabs(double(i) - center) / width);
        break;
      }
      default: {  // sparse: a few spikes over exact zeros
        const int spikes = 1 + int(rng() % 4);
        for (int s = 0; s < spikes; ++s)
          pmf[rng() % 256] = 1.0 + double(rng() % 100);
        break;
      }
    }
    const coder::FreqTable table = coder::quantize_freqs(pmf);
    const int len = 1 + int(rng() % 64);
    std::vector<int> syms(static_cast<size_t>(len));
    const bool from_pmf = (rng() & 1u) != 0;
    for (auto& s : syms) {
      if (from_pmf) {
        const uint32_t target = rng() % 65536u;
        s = int(std::upper_bound(table.cum.begin(), table.cum.end(), target) -
                table.cum.begin()) -
            1;
      } else {
        s = int(rng() % 256u);
      }
    }
    coder::RangeEncoder enc;
    for (int s : syms) coder::encode_symbol(enc, table, s);
    const io::Bytes bytes = enc.finish();
    coder::RangeDecoder dec(bytes);
    for (int i = 0; i < len && c.ok; ++i)
      c.require(coder::decode_symbol(dec, table) == syms[size_t(i)],
                "sequence " + std::to_string(it) + " symbol " +
                    std::to_string(i) + " decoded wrong");
  }

  // 100 random probability stacks, whole-chain round trip.
  {
    NoGradGuard guard;
    for (int it = 0; it < 100 && c.ok; ++it) {
      const int scales = 1 + int(rng() % 3);
      const int mixtures = 1 + int(rng() % 4);
      const int ch = 2 + int(rng() % 11);
      const int h = 1 + int(rng() % 12);
      const int w = 1 + int(rng() % 12);
      std::mt19937 mrng(rng());
      msprob::ScaleStack stack(mrng, ch, scales, mixtures);
      const Tensor z0 = random_symbol_tensor({1, ch, h, w}, rng);
      const auto chain = stack.build_chain(z0);
      const auto payloads = msprob::encode_chain_payloads(stack, chain);
      const auto decoded = msprob::decode_chain_payloads(stack, payloads, h, w);
      c.require(decoded.size() == chain.size(), "chain length differs");
      for (size_t s = 0; s + 1 <= chain.size() && c.ok; ++s)
        c.require(same_bits(chain[s], decoded[s]),
                  "stack " + std::to_string(it) + " scale " +
                      std::to_string(s) + " differs");
    }
  }

  c.require(c.seconds() < 60.0, fmt("took %.1f s (budget 60)", c.seconds()));
  if (c.ok) c.note("10000 sequences + 100 stacks bit-exact");
  c.report();
  CHECK_MESSAGE(c.ok, c.detail);
}

TEST_CASE("criterion 2: coded size tracks the rate estimate") {
  Criterion c(2, "rate fidelity");
  NoGradGuard guard;
  std::mt19937 rng(99);
  msprob::ScaleStack stack(rng, 10, 2, 3);
  double worst_hi = 0, worst_lo = 10;
  for (int it = 0; it < 50; ++it) {
    Tensor z0({1, 10, 16, 16}, 0.f);
    auto vals = z0.values();
    switch (it % 4) {
      case 0:  // uniform symbols
        for (auto& v : vals) v = float(rng() % 256);
        break;
      case 1:  // tight cluster
        for (auto& v : vals) v = float(118 + int(rng() % 20));
        break;
      case 2:  // smooth ramp with jitter
        for (int64_t i = 0; i < z0.numel(); ++i)
          vals[size_t(i)] = float((i * 7) % 256 / 2 + int(rng() % 32));
        break;
      default:  // nearly constant plane
        for (auto& v : vals) v = float(128 + int(rng() % 2));
        break;
    }
    const auto chain = stack.build_chain(z0);
    const double rate = double(stack.rate_bits(chain).item());
    const auto payloads = msprob::encode_chain_payloads(stack, chain);
    size_t bytes = 0;
    for (const auto& p : payloads) bytes += p.size();
    const double bits = double(bytes) * 8.0;
    c.require(bits <= 1.01 * rate + 128.0,
              fmt("tensor %g coded %g bits vs estimate %g", it, bits, rate));
    c.require(bits >= 0.95 * rate,
              fmt("tensor %g coded %g bits, below 0.95x estimate %g", it,
                  bits, rate));
    worst_hi = std::max(worst_hi, bits / rate);
    worst_lo = std::min(worst_lo, bits / rate);
  }
  if (c.ok)
    c.note(fmt("50 tensors, coded/estimate in [%.4f, %.4f]", worst_lo,
               worst_hi));
  c.report();
  CHECK_MESSAGE(c.ok, c.detail);
}

namespace {

double logistic_density(double x, double mu, double s) {
  const double t = (x - mu) / s;
  const double e = std::exp(-std::fabs(t));
  return e / (s * (1.0 + e) * (1.0 + e));
}

// Simpson's rule over [a, b]
double quad_bin(double a, double b, double mu, double s, int n = 2000) {
  double acc = 0;
  const double h = (b - a) / n;
  for (int i = 0; i <= n; ++i) {
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    acc += w * logistic_density(a + h * double(i), mu, s);
  }
  return acc * h / 3.0;
}

}  // namespace

TEST_CASE("criterion 3: mixture PMFs are sound") {
  Criterion c(3, "PMF soundness");
  std::mt19937 rng(31337);
  auto unit = [&rng] { return double(rng()) / double(rng.max()); };

  // 100,000 random parameter draws: the 256-bin PMF must sum to one.
  double worst_sum_err = 0;
  for (int it = 0; it < 100000 && c.ok; ++it) {
    const int K = 1 + int(rng() % 4);
    double pi[4], mu[4], s[4], norm = 0;
    for (int k = 0; k < K; ++k) {
      pi[k] = 0.05 + unit();
      norm += pi[k];
      mu[k] = -20.0 + 295.0 * unit();
      s[k] = std::exp(std::log(1e-3) + (std::log(50.0) - std::log(1e-3)) *
                                           unit());
    }
    for (int k = 0; k < K; ++k) pi[k] /= norm;
    double sum = 0;
    for (int q = 0; q < 256; ++q)
      sum += msprob::bin_probability(q, K, pi, mu, s);
    worst_sum_err = std::max(worst_sum_err, std::fabs(sum - 1.0));
    c.require(std::fabs(sum - 1.0) <= 1e-6,
              fmt("draw %g sums to 1%+.3g", it, sum - 1.0));
  }

  // Interior bins against Simpson quadrature of the mixture density.
  double worst_quad_err = 0;
  for (int it = 0; it < 200 && c.ok; ++it) {
    const int K = 1 + int(rng() % 4);
    double pi[4], mu[4], s[4], norm = 0;
    for (int k = 0; k < K; ++k) {
      pi[k] = 0.05 + unit();
      norm += pi[k];
      mu[k] = -20.0 + 295.0 * unit();
      s[k] = std::exp(std::log(0.05) + (std::log(50.0) - std::log(0.05)) *
                                           unit());
    }
    for (int k = 0; k < K; ++k) pi[k] /= norm;
    const int q = 1 + int(rng() % 254);
    double raw = 0;
    for (int k = 0; k < K; ++k)
      raw += pi[k] * quad_bin(double(q) - 0.5, double(q) + 0.5, mu[k], s[k]);
    const double expect =
        (1.0 - msprob::kPmfEps) * raw + msprob::kPmfEps / 256.0;
    const double got = msprob::bin_probability(q, K, pi, mu, s);
    worst_quad_err = std::max(worst_quad_err, std::fabs(got - expect));
    c.require(std::fabs(got - expect) <= 1e-6,
              fmt("draw %g bin value off by %.3g", it, got - expect));
  }

  if (c.ok)
    c.note(fmt("1e5 sums (max err %.2g), 200 quadrature bins (max err %.2g)",
               worst_sum_err, worst_quad_err));
  c.report();
  CHECK_MESSAGE(c.ok, c.detail);
}

TEST_CASE("criterion 4: gradients match finite differences") {
  Criterion c(4, "gradient suite");
  using testing::random_parameter;
  std::mt19937 rng(555);
  auto uni = [&rng](float lo, float hi) {
    return lo + (hi - lo) * float(rng() % 100000u) / 99999.f;
  };
  // values in [lo, hi] with both signs, at least `margin` away from zero
  auto signed_away = [&](float lo, float hi) {
    const float v = uni(lo, hi);
    return (rng() & 1u) ? v : -v;
  };

  struct Entry {
    const char* name;
    FdResult fd;
  };
  std::vector<Entry> entries;
  auto run = [&](const char* name, auto&& make_loss,
                 std::vector<Tensor> params, float h = 1e-2f) {
    entries.push_back({name, fd_probe(make_loss, params, rng(), h)});
  };

  // conv2d, stride 1 and stride 2
  {
    Tensor x = random_parameter({1, 3, 8, 8}, 1001);
    Tensor w = random_parameter({4, 3, 3, 3}, 1002, -0.5f, 0.5f);
    Tensor b = random_parameter({1, 4, 1, 1}, 1003, -0.2f, 0.2f);
    run("conv2d s1", [&] { return op::sum_all(op::conv2d(x, w, b, 1, 1)); },
        {x, w, b});
    run("conv2d s2", [&] { return op::sum_all(op::conv2d(x, w, b, 2, 1)); },
        {x, w, b});
  }
  // pixel shuffle / unshuffle, weighted so permutation errors surface
  {
    Tensor x = random_parameter({1, 8, 4, 4}, 1010);
    Tensor k = random_tensor({1, 2, 8, 8}, 1011);
    run("pixel_shuffle",
        [&] { return op::sum_all(op::mul(op::pixel_shuffle(x, 2), k)); },
        {x});
  }
  {
    Tensor x = random_parameter({1, 2, 8, 8}, 1012);
    Tensor k = random_tensor({1, 8, 4, 4}, 1013);
    run("pixel_unshuffle",
        [&] { return op::sum_all(op::mul(op::pixel_unshuffle(x, 2), k)); },
        {x});
  }
  // kinked activations with inputs held away from their kinks
  {
    Tensor x = make_param({1, 3, 8, 8}, [&] { return signed_away(0.1f, 1.f); });
    run("leaky_relu", [&] { return op::sum_all(op::leaky_relu(x)); }, {x});
  }
  {
    Tensor x = make_param({1, 3, 8, 8}, [&] { return signed_away(0.1f, 1.f); });
    run("abs", [&] { return op::sum_all(op::abs(x)); }, {x});
  }
  {
    // clamp to [0.2, 0.8]: values on both sides, none within 0.02 of a bound
    auto gen = [&] {
      switch (rng() % 3) {
        case 0: return uni(0.00f, 0.17f);
        case 1: return uni(0.23f, 0.77f);
        default: return uni(0.83f, 1.00f);
      }
    };
    Tensor x = make_param({1, 3, 8, 8}, gen);
    run("clamp", [&] { return op::sum_all(op::clamp(x, 0.2f, 0.8f)); }, {x});
    run("clamp_min", [&] { return op::sum_all(op::clamp_min(x, 0.2f)); }, {x});
  }
  {
    Tensor x = random_parameter({1, 3, 8, 8}, 1020, -2.f, 2.f);
    run("sigmoid", [&] { return op::sum_all(op::sigmoid(x)); }, {x});
    run("softplus", [&] { return op::sum_all(op::softplus(x)); }, {x});
  }
  {
    Tensor x = random_parameter({1, 3, 8, 8}, 1021, 0.2f, 2.f);
    run("pow_scalar",
        [&] { return op::sum_all(op::pow_scalar(x, 1.7f)); }, {x});
  }
  // arithmetic, weighted by a fixed tensor so gradients are non-constant
  {
    Tensor a = random_parameter({1, 3, 8, 8}, 1030);
    Tensor b = random_parameter({1, 3, 8, 8}, 1031, 0.5f, 2.f);
    Tensor k = random_tensor({1, 3, 8, 8}, 1032);
    run("add", [&] { return op::sum_all(op::mul(op::add(a, b), k)); }, {a, b});
    run("sub", [&] { return op::sum_all(op::mul(op::sub(a, b), k)); }, {a, b});
    run("mul", [&] { return op::sum_all(op::mul(op::mul(a, b), k)); }, {a, b});
    run("div", [&] { return op::sum_all(op::mul(op::div(a, b), k)); }, {a, b});
    run("add_scalar",
        [&] { return op::sum_all(op::mul(op::add_scalar(a, 0.37f), k)); },
        {a});
    run("mul_scalar",
        [&] { return op::sum_all(op::mul(op::mul_scalar(a, -1.4f), k)); },
        {a});
  }
  // shape ops
  {
    Tensor a = random_parameter({1, 3, 8, 8}, 1040);
    Tensor b = random_parameter({1, 2, 8, 8}, 1041);
    Tensor k = random_tensor({1, 5, 8, 8}, 1042);
    run("concat_channels",
        [&] { return op::sum_all(op::mul(op::concat_channels(a, b), k)); },
        {a, b});
  }
  {
    Tensor x = random_parameter({1, 6, 8, 8}, 1043);
    Tensor k = random_tensor({1, 3, 8, 8}, 1044);
    run("slice_channels",
        [&] { return op::sum_all(op::mul(op::slice_channels(x, 1, 4), k)); },
        {x});
  }
  {
    Tensor x = random_parameter({1, 3, 8, 8}, 1045);
    Tensor k = random_tensor({1, 3, 5, 6}, 1046);
    run("crop_spatial",
        [&] { return op::sum_all(op::mul(op::crop_spatial(x, 5, 6), k)); },
        {x});
  }
  // reductions
  {
    Tensor x = random_parameter({1, 3, 8, 8}, 1050);
    run("sum_all", [&] { return op::sum_all(op::mul(x, x)); }, {x});
    run("mean_all", [&] { return op::mean_all(op::mul(x, x)); }, {x});
  }
  {
    Tensor x = random_parameter({1, 5, 8, 8}, 1051);
    Tensor k = random_tensor({1, 5, 8, 8}, 1052);
    run("softmax_channels",
        [&] { return op::sum_all(op::mul(op::softmax_channels(x), k)); },
        {x});
  }
  // fixed-kernel blurs and pooling
  {
    const float kern[5] = {0.0625f, 0.25f, 0.375f, 0.25f, 0.0625f};
    Tensor x = random_parameter({1, 2, 8, 8}, 1060);
    Tensor kh = random_tensor({1, 2, 4, 8}, 1061);
    Tensor kw = random_tensor({1, 2, 8, 4}, 1062);
    run("blur1d_h",
        [&] { return op::sum_all(op::mul(op::blur1d_h(x, kern), kh)); }, {x});
    run("blur1d_w",
        [&] { return op::sum_all(op::mul(op::blur1d_w(x, kern), kw)); }, {x});
  }
  {
    Tensor x = random_parameter({1, 3, 8, 8}, 1063);
    Tensor k = random_tensor({1, 3, 4, 4}, 1064);
    run("avg_pool2",
        [&] { return op::sum_all(op::mul(op::avg_pool2(x), k)); }, {x});
  }
  // channel-prefix ramp with tau held away from the ramp kinks
  {
    const int F = 10;
    auto gen = [&] {
      return (std::floor(uni(0.f, 0.999f) * float(F)) + 0.3f +
              0.4f * uni(0.f, 1.f)) /
             float(F);
    };
    Tensor tau = make_param({1, 1, 8, 8}, gen);
    Tensor k = random_tensor({1, F, 8, 8}, 1070);
    run("soft_prefix_mask",
        [&] { return op::sum_all(op::mul(op::soft_prefix_mask(tau, F), k)); },
        {tau});
  }
  // mixture code length (parameters chosen clear of the probability floor)
  {
    const int C = 4, K = 3;
    Tensor mu = make_param({1, K * C, 8, 8}, [&] { return uni(120.f, 136.f); });
    Tensor lam =
        make_param({1, K * C, 8, 8}, [&] { return uni(-0.5f, 0.5f); });
    Tensor s = make_param({1, K * C, 8, 8}, [&] { return uni(2.f, 3.f); });
    Tensor pi = make_param({1, K, 8, 8}, [&] { return uni(0.2f, 0.8f); });
    std::mt19937 srng(1080);
    Tensor sym({1, C, 8, 8}, 0.f);
    for (auto& v : sym.values()) v = float(124 + int(srng() % 9));
    run("logistic_mixture_bits",
        [&] {
          return op::sum_all(op::logistic_mixture_bits(mu, lam, s, pi, sym, K));
        },
        {mu, lam, s, pi});
  }
  // perceptual metric and mask budget
  {
    Tensor a = random_parameter({1, 3, 8, 8}, 1090, 0.1f, 0.9f);
    Tensor b = random_parameter({1, 3, 8, 8}, 1091, 0.1f, 0.9f);
    run("ms_ssim", [&] { return metrics::ms_ssim(a, b); }, {a, b});
  }
  {
    Tensor tau = random_parameter({1, 1, 8, 8}, 1092, 0.3f, 0.7f);
    run("budget_penalty",
        [&] { return mask::budget_penalty(tau, 0.45f); }, {tau});
  }
  // the composed training loss on an 8x8 crop
  {
    Tensor xr = random_parameter({1, 3, 8, 8}, 1100, -2.f, 2.f);
    Tensor target = random_tensor({1, 3, 8, 8}, 1101, 0.f, 1.f);
    Tensor r2 = random_parameter({1, 1, 4, 4}, 1102, 0.5f, 2.f);
    Tensor tau = random_parameter({1, 1, 8, 8}, 1103, 0.2f, 0.8f);
    train::LossWeights w;
    w.lambda_rate = 0.01;
    w.lambda_mask = 0.3;
    w.beta = 0.4;
    run("composed loss",
        [&] {
          return train::total_loss(op::sigmoid(xr), target,
                                   op::mean_all(op::mul(r2, r2)), tau, w,
                                   nullptr);
        },
        {xr, r2, tau});
  }

  double worst = 0;
  int total = 0;
  for (const auto& e : entries) {
    total += e.fd.checked;
    worst = std::max(worst, e.fd.worst);
    c.require(e.fd.checked >= 20,
              std::string(e.name) + " only " +
                  std::to_string(e.fd.checked) + " perturbations");
    c.require(e.fd.failed == 0,
              std::string(e.name) + ": " + std::to_string(e.fd.failed) + "/" +
                  std::to_string(e.fd.checked) + " outside tolerance");
  }
  if (c.ok)
    c.note(fmt("%g ops, %g perturbations, worst err %.2fx tol",
               double(entries.size()), double(total), worst));
  c.report();
  CHECK_MESSAGE(c.ok, c.detail);
}

TEST_CASE("criterion 5: channel mask equals the brute-force oracle") {
  Criterion c(5, "mask oracle");
  std::mt19937 rng(777);
  for (int F : {4, 10, 16}) {
    // every quantized level, one site each
    Tensor tau({1, 1, 1, F + 1}, 0.f);
    {
      auto v = tau.values();
      for (int l = 0; l <= F; ++l) v[size_t(l)] = float(l) / float(F);
    }
    const Tensor tq = mask::quantize_tau(tau, F);
    const Tensor m = mask::hard_prefix_mask(tq, F);
    c.require(m.shape() == Shape{1, F, 1, F + 1}, "mask shape");
    const auto tqv = tq.values();
    const auto mv = m.values();
    for (int l = 0; l <= F && c.ok; ++l) {
      const long active = std::lround(double(tqv[size_t(l)]) * F);
      for (int k = 0; k < F; ++k) {
        const float got = mv[size_t(k * (F + 1) + l)];
        const float want = (k < active) ? 1.f : 0.f;
        c.require(got == want, fmt("F=%g level %g channel %g", F, l, k));
        if (!c.ok) break;
      }
    }
    // prefix property + count for random taus
    Tensor rt({1, 1, 20, 50}, 0.f);
    for (auto& v : rt.values()) v = float(rng() % 100000u) / 99999.f;
    const Tensor rtq = mask::quantize_tau(rt, F);
    const Tensor rm = mask::hard_prefix_mask(rtq, F);
    const auto rtqv = rtq.values();
    const auto rmv = rm.values();
    const int sites = 20 * 50;
    for (int sIdx = 0; sIdx < sites && c.ok; ++sIdx) {
      int count = 0;
      float prev = 1.f;
      for (int k = 0; k < F; ++k) {
        const float v = rmv[size_t(k * sites + sIdx)];
        c.require(v == 0.f || v == 1.f, "mask value not 0/1");
        c.require(v <= prev, fmt("F=%g site %g not a prefix", F, sIdx));
        prev = v;
        count += v == 1.f ? 1 : 0;
      }
      c.require(count == std::lround(double(rtqv[size_t(sIdx)]) * F),
                fmt("F=%g site %g active count", F, sIdx));
    }
  }
  if (c.ok) c.note("all levels at F=4,10,16 + 3000 random sites");
  c.report();
  CHECK_MESSAGE(c.ok, c.detail);
}

TEST_CASE("criterion 6: blend limits are exact") {
  Criterion c(6, "blend limits");
  std::mt19937 rng(8);
  net::CodecModel m(rng, net::ModelConfig{});
  // make the mixing conv the identity
  for (auto& [name, t] : m.named_parameters()) {
    if (name == "rho.w") {
      auto v = t.values();
      std::fill(v.begin(), v.end(), 0.f);
      for (int o = 0; o < 3; ++o) v[size_t(o * 3 + o)] = 1.f;
    } else if (name == "rho.b") {
      auto v = t.values();
      std::fill(v.begin(), v.end(), 0.f);
    }
  }
  NoGradGuard guard;
  const Tensor recon = random_tensor({1, 3, 16, 16}, 21, 0.02f, 0.98f);
  const Tensor fprev = random_tensor({1, 3, 16, 16}, 22, 0.02f, 0.98f);
  const Tensor ones({1, 3, 16, 16}, 1.f);
  const Tensor zeros({1, 3, 16, 16}, 0.f);
  c.require(same_bits(m.blend(ones, recon, fprev), recon),
            "A=1 does not return the raw reconstruction bit-exactly");
  c.require(same_bits(m.blend(zeros, recon, fprev), fprev),
            "A=0 does not return the previous frame bit-exactly");
  if (c.ok) c.note("A=1 -> recon and A=0 -> previous frame, bitwise");
  c.report();
  CHECK_MESSAGE(c.ok, c.detail);
}

TEST_CASE("criterion 7: toy training beats the copy baseline") {
  Criterion c(7, "toy training");
  const ToyRuns& runs = toy_runs();
  const auto& mean = runs.full_eval.mean;
  c.require(runs.full_eval.rows.size() == 200, "expected 200 evaluated pairs");
  c.require(mean.msssim > mean.copy_msssim,
            fmt("MS-SSIM %.4f not above copy baseline %.4f", mean.msssim,
                mean.copy_msssim));
  c.require(mean.bpp < 0.5, fmt("mean bpp %.4f not under 0.5", mean.bpp));
  c.require(runs.full_train_seconds < 1800.0,
            fmt("training took %.0f s (budget 1800)",
                runs.full_train_seconds));
  // smoothed loss after 500 steps must sit below the starting level
  if (runs.full_stats.size() >= 525) {
    double early = 0, later = 0;
    for (int i = 0; i < 50; ++i) early += runs.full_stats[size_t(i)].total;
    for (int i = 475; i < 525; ++i) later += runs.full_stats[size_t(i)].total;
    c.require(later / 50.0 < early / 50.0,
              fmt("loss at 500 (%.4f) not below start (%.4f)", later / 50.0,
                  early / 50.0));
  } else {
    c.require(false, "missing step statistics");
  }
  if (c.ok)
    c.note(fmt("MS-SSIM %.4f vs copy %.4f, bpp %.3f", mean.msssim,
               mean.copy_msssim, mean.bpp) +
           fmt(", trained in %.0f s", runs.full_train_seconds));
  c.report();
  CHECK_MESSAGE(c.ok, c.detail);
}

TEST_CASE("criterion 8: importance masking saves real bits") {
  Criterion c(8, "ablation direction");
  const ToyRuns& runs = toy_runs();
  const double full_bpp = runs.full_eval.mean.bpp;
  const double noimp_bpp = runs.noimp_eval.mean.bpp;
  c.require(full_bpp > 0, "full-model bpp not positive");
  c.require(noimp_bpp >= 1.3 * full_bpp,
            fmt("no-importance bpp %.4f under 1.3x full-model bpp %.4f",
                noimp_bpp, full_bpp));
  if (c.ok)
    c.note(fmt("bpp %.3f vs %.3f (ratio %.2f)", noimp_bpp, full_bpp,
               noimp_bpp / full_bpp));
  c.report();
  CHECK_MESSAGE(c.ok, c.detail);
}

TEST_CASE("criterion 9: schedule endpoints are exact") {
  Criterion c(9, "scheduler endpoints");
  const train::TrainConfig cfg;  // defaults carry the published schedule
  const struct {
    const char* name;
    double start, end;
  } rows[] = {
      {"lr", 0.001, 0.0002},
      {"lambda_rate", 0.0001, 0.001},
      {"lambda_mask", 0.0001, 0.5},
      {"beta", 0.5, 0.3},
  };
  c.require(cfg.lr_start == rows[0].start && cfg.lr_end == rows[0].end,
            "default lr endpoints");
  c.require(cfg.lambda_rate_start == rows[1].start &&
                cfg.lambda_rate_end == rows[1].end,
            "default rate-weight endpoints");
  c.require(cfg.lambda_mask_start == rows[2].start &&
                cfg.lambda_mask_end == rows[2].end,
            "default mask-weight endpoints");
  c.require(cfg.beta_start == rows[3].start && cfg.beta_end == rows[3].end,
            "default budget endpoints");
  for (const auto& r : rows) {
    for (int64_t total : {2, 3, 100, 2000}) {
      c.require(train::schedule(r.start, r.end, 0, total) == r.start,
                std::string(r.name) + " step 0 not exactly the start value");
      c.require(train::schedule(r.start, r.end, total - 1, total) == r.end,
                std::string(r.name) + " final step not exactly the end value");
    }
  }
  if (c.ok) c.note("four schedules exact at both ends");
  c.report();
  CHECK_MESSAGE(c.ok, c.detail);
}

// The decode entry point admits only (model, previous frame, container):
// there is no parameter through which the current frame could reach it.
static_assert(
    std::is_same_v<decltype(&pipeline::decode_frame),
                   Tensor (*)(const net::CodecModel&, const Tensor&,
                              const container::Container&)>,
    "decode path must stay a pure function of model, prior frame, and stream");

TEST_CASE("criterion 10: decoder matches the encoder bit-exactly") {
  Criterion c(10, "decoder independence");
  std::mt19937 rng(2024);
  net::CodecModel m(rng, net::ModelConfig{});
  const int scales = m.prob().scales();
  for (int it = 0; it < 20 && c.ok; ++it) {
    const int h = 5 + int(rng() % 36);
    const int w = 5 + int(rng() % 36);
    const synth::Pair p = synth::make_pair(rng, h, w);
    const auto enc = pipeline::encode_frame_pair(m, p.prev, p.cur);
    const io::Bytes bytes = container::serialize(enc.container);
    const auto parsed = container::parse(bytes, scales + 1);
    const Tensor symbols = pipeline::decode_latent_symbols(m, parsed);
    c.require(same_bits(symbols, enc.symbols),
              fmt("pair %g (%gx%g): decoded symbols differ", it, h, w));
    const Tensor recon = pipeline::decode_frame(m, p.prev, parsed);
    c.require(same_bits(recon, enc.recon),
              fmt("pair %g (%gx%g): reconstruction differs", it, h, w));
  }
  if (c.ok) c.note("20 pairs, symbols + reconstruction bitwise equal");
  c.report();
  CHECK_MESSAGE(c.ok, c.detail);
}
