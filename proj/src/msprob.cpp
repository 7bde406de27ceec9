#include "ntc/msprob.hpp"

#include <cmath>

#include "ntc/coder.hpp"
#include "ntc/kernels.hpp"
#include "ntc/ops.hpp"

namespace ntc::msprob {

namespace op = ntc::ops;

namespace {

Tensor normalize_symbols(const Tensor& z) {
  return op::mul_scalar(op::add_scalar(z, -127.5f), 1.f / 127.5f);
}

double sigmoid_d(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace

ScaleStack::ScaleStack(std::mt19937& rng, int latent_channels, int scales,
                       int mixtures)
    : mixtures_(mixtures) {
  if (latent_channels < 1 || scales < 0 || mixtures < 1 || mixtures > 16)
    throw ShapeError("scale stack: bad configuration C=" +
                     std::to_string(latent_channels) +
                     " S=" + std::to_string(scales) +
                     " K=" + std::to_string(mixtures));
  channels_.push_back(latent_channels);
  for (int s = 0; s < scales; ++s)
    channels_.push_back((channels_.back() + 1) / 2);
  for (int s = 0; s < scales; ++s) {
    extract_.push_back({nn::make_conv(rng, channels_[size_t(s)], 32, 3, 2, 1),
                        nn::make_conv(rng, 32, 32, 3, 1, 1),
                        nn::make_conv(rng, 32, channels_[size_t(s) + 1], 3, 1,
                                      1)});
  }
  for (int s = 0; s < scales; ++s) {
    const int c = channels_[size_t(s)];
    const int planes = 3 * mixtures_ * c + mixtures_;
    predict_.push_back(
        {nn::make_conv(rng, channels_[size_t(s) + 1], 32, 3, 1, 1),
         nn::make_conv(rng, 32, 32, 3, 1, 1),
         nn::make_conv(rng, 32, 4 * planes, 3, 1, 1)});
    // Start the logistic scales wide (softplus(32) ~ 32 symbol units) so an
    // untrained model prices every symbol near the 8-bit uniform baseline
    // instead of betting sharply and paying floor costs; training narrows the
    // scales from there. The head conv feeds a 2x pixel shuffle, so shuffled
    // output plane j comes from conv channels [4j, 4j+4): the scale planes
    // [2Kc, 3Kc) map to conv channels [8Kc, 12Kc).
    const int kc = mixtures_ * c;
    auto bias = predict_.back()[2].b.values();
    for (int i = 8 * kc; i < 12 * kc; ++i) bias[size_t(i)] = 32.f;
  }
}

std::vector<Tensor> ScaleStack::build_chain(const Tensor& z0) const {
  std::vector<Tensor> chain{z0};
  for (const auto& net : extract_) {
    Tensor t = normalize_symbols(chain.back());
    t = op::leaky_relu(nn::apply(net[0], t));
    t = op::leaky_relu(nn::apply(net[1], t));
    t = nn::apply(net[2], t);
    // map into [0,255] then round; straight-through keeps the path trainable
    chain.push_back(op::ste_round(op::mul_scalar(op::sigmoid(t), 255.f)));
  }
  return chain;
}

ScaleStack::Prediction ScaleStack::predict(int s, const Tensor& z_next, int h,
                                           int w) const {
  if (s < 0 || s >= scales())
    throw ShapeError("predict: scale " + std::to_string(s) + " of " +
                     std::to_string(scales()));
  const auto& net = predict_[size_t(s)];
  const int c = channels_[size_t(s)];
  const int kc = mixtures_ * c;
  Tensor t = normalize_symbols(z_next);
  t = op::leaky_relu(nn::apply(net[0], t));
  t = op::leaky_relu(nn::apply(net[1], t));
  t = nn::apply(net[2], t);
  t = op::crop_spatial(op::pixel_shuffle(t, 2), h, w);
  Prediction p;
  p.mu = op::add_scalar(op::slice_channels(t, 0, kc), 127.5f);
  p.lam = op::slice_channels(t, kc, 2 * kc);
  p.scale = op::add_scalar(op::softplus(op::slice_channels(t, 2 * kc, 3 * kc)),
                           1e-3f);
  p.pi = op::softmax_channels(
      op::slice_channels(t, 3 * kc, 3 * kc + mixtures_));
  return p;
}

Tensor ScaleStack::rate_bits(const std::vector<Tensor>& chain) const {
  if (int(chain.size()) != scales() + 1)
    throw ShapeError("rate_bits: chain has " + std::to_string(chain.size()) +
                     " scales, stack wants " + std::to_string(scales() + 1));
  Tensor total(Shape{1, 1, 1, 1},
               {8.f * float(chain.back().numel())});  // raw top scale
  for (int s = 0; s < scales(); ++s) {
    const Shape& zs = chain[size_t(s)].shape();
    Prediction p = predict(s, chain[size_t(s) + 1], zs.h, zs.w);
    Tensor bits = op::logistic_mixture_bits(p.mu, p.lam, p.scale, p.pi,
                                            chain[size_t(s)], mixtures_);
    total = op::add(total, op::sum_all(bits));
  }
  return total;
}

std::vector<Tensor> ScaleStack::parameters() const {
  std::vector<Tensor> out;
  for (const auto& net : extract_)
    for (const auto& l : net) {
      out.push_back(l.w);
      out.push_back(l.b);
    }
  for (const auto& net : predict_)
    for (const auto& l : net) {
      out.push_back(l.w);
      out.push_back(l.b);
    }
  return out;
}

void ScaleStack::named_parameters(const std::string& prefix,
                                  NamedTensors& out) const {
  for (size_t s = 0; s < extract_.size(); ++s)
    for (size_t j = 0; j < 3; ++j) {
      const std::string base =
          prefix + "extract" + std::to_string(s) + "." + std::to_string(j);
      out.emplace_back(base + ".w", extract_[s][j].w);
      out.emplace_back(base + ".b", extract_[s][j].b);
    }
  for (size_t s = 0; s < predict_.size(); ++s)
    for (size_t j = 0; j < 3; ++j) {
      const std::string base =
          prefix + "predict" + std::to_string(s) + "." + std::to_string(j);
      out.emplace_back(base + ".w", predict_[s][j].w);
      out.emplace_back(base + ".b", predict_[s][j].b);
    }
}

double bin_probability(int q, int K, const double* pi, const double* mu,
                       const double* s) {
  const bool absorb_lo = q <= 0;
  const bool absorb_hi = q >= 255;
  double p = 0;
  for (int k = 0; k < K; ++k) {
    const double hi = (double(q) + 0.5 - mu[k]) / s[k];
    const double lo = (double(q) - 0.5 - mu[k]) / s[k];
    double d;
    if (absorb_hi && absorb_lo) {
      d = 1.0;
    } else if (absorb_hi) {
      d = 1.0 - sigmoid_d(lo);
    } else if (absorb_lo) {
      d = sigmoid_d(hi);
    } else if (double(q) > mu[k]) {
      d = sigmoid_d(-lo) - sigmoid_d(-hi);  // complementary: accurate tail
    } else {
      d = sigmoid_d(hi) - sigmoid_d(lo);
    }
    p += pi[k] * (d > 0 ? d : 0.0);
  }
  return (1.0 - kPmfEps) * p + kPmfEps / 256.0;
}

namespace {

// per-channel batch of coder tables, one per spatial site
struct TableBuilder {
  const float* mu;
  const float* lam;
  const float* sc;
  const float* pi;
  const float* z;  // decoded (or source) symbols, earlier channels valid
  int K, C, h, w;
  int64_t plane() const { return int64_t(h) * w; }

  coder::FreqTable build(int c, int64_t site) const {
    double pik[16], muk[16], sk[16];
    // softmax over the K mixture logits... pi tensor already normalized
    const double xprev =
        c > 0 ? (double(z[(int64_t(c) - 1) * plane() + site]) - 127.5) / 127.5
              : 0.0;
    for (int k = 0; k < K; ++k) {
      pik[k] = double(pi[int64_t(k) * plane() + site]);
      const int64_t o = (int64_t(k) * C + c) * plane() + site;
      muk[k] = double(mu[o]) + (c > 0 ? double(lam[o]) * xprev : 0.0);
      sk[k] = double(sc[o]);
    }
    std::vector<double> pmf(256);
    for (int q = 0; q < 256; ++q)
      pmf[size_t(q)] = bin_probability(q, K, pik, muk, sk);
    return coder::quantize_freqs(pmf);
  }
};

TableBuilder make_builder(const ScaleStack::Prediction& pred, const float* z,
                          int K, int c, int h, int w) {
  if (!(pred.mu.shape() == Shape{1, K * c, h, w}) ||
      !(pred.pi.shape() == Shape{1, K, h, w}))
    throw ShapeError("scale coding: prediction " + pred.mu.shape().str() +
                     " does not match plane " + Shape{1, c, h, w}.str());
  TableBuilder b;
  b.mu = pred.mu.values().data();
  b.lam = pred.lam.values().data();
  b.sc = pred.scale.values().data();
  b.pi = pred.pi.values().data();
  b.z = z;
  b.K = K;
  b.C = c;
  b.h = h;
  b.w = w;
  return b;
}

}  // namespace

io::Bytes encode_scale_symbols(const Tensor& z,
                               const ScaleStack::Prediction& pred,
                               int mixtures) {
  const Shape& s = z.shape();
  if (s.n != 1)
    throw ShapeError("encode_scale_symbols: batch of one expected, got " +
                     s.str());
  const TableBuilder tb =
      make_builder(pred, z.values().data(), mixtures, s.c, s.h, s.w);
  const int64_t plane = tb.plane();
  const float* zv = z.values().data();
  coder::RangeEncoder enc;
  std::vector<coder::FreqTable> tables(static_cast<size_t>(plane));
  for (int c = 0; c < s.c; ++c) {
    kernels::parallel_for(plane, [&](int64_t i) {
      tables[size_t(i)] = tb.build(c, i);
    });
    for (int64_t i = 0; i < plane; ++i) {
      const int sym = int(zv[int64_t(c) * plane + i]);
      if (sym < 0 || sym > 255)
        throw VerifyError("encode_scale_symbols: symbol out of range");
      coder::encode_symbol(enc, tables[size_t(i)], sym);
    }
  }
  return enc.finish();
}

Tensor decode_scale_symbols(std::span<const uint8_t> payload,
                            const ScaleStack::Prediction& pred, int c, int h,
                            int w, int mixtures) {
  Tensor z(Shape{1, c, h, w});
  float* zv = z.values().data();
  const TableBuilder tb = make_builder(pred, zv, mixtures, c, h, w);
  const int64_t plane = tb.plane();
  coder::RangeDecoder dec(payload);
  std::vector<coder::FreqTable> tables(static_cast<size_t>(plane));
  for (int ch = 0; ch < c; ++ch) {
    kernels::parallel_for(plane, [&](int64_t i) {
      tables[size_t(i)] = tb.build(ch, i);
    });
    for (int64_t i = 0; i < plane; ++i)
      zv[int64_t(ch) * plane + i] =
          float(coder::decode_symbol(dec, tables[size_t(i)]));
  }
  return z;
}

std::vector<io::Bytes> encode_chain_payloads(
    const ScaleStack& stack, const std::vector<Tensor>& chain) {
  if (int(chain.size()) != stack.scales() + 1)
    throw ShapeError("encode_chain_payloads: wrong chain length");
  NoGradGuard ng;
  std::vector<io::Bytes> payloads;
  // raw top scale, one byte per element in memory order
  {
    const Tensor& top = chain.back();
    io::Bytes raw;
    raw.reserve(size_t(top.numel()));
    for (float v : top.values()) {
      const int sym = int(v);
      if (sym < 0 || sym > 255 || float(sym) != v)
        throw VerifyError("encode_chain_payloads: non-symbol value in top scale");
      raw.push_back(uint8_t(sym));
    }
    payloads.push_back(std::move(raw));
  }
  for (int s = stack.scales() - 1; s >= 0; --s) {
    const Shape& zs = chain[size_t(s)].shape();
    const auto pred = stack.predict(s, chain[size_t(s) + 1], zs.h, zs.w);
    payloads.push_back(
        encode_scale_symbols(chain[size_t(s)], pred, stack.mixtures()));
  }
  return payloads;
}

std::vector<Tensor> decode_chain_payloads(const ScaleStack& stack,
                                          std::span<const io::Bytes> payloads,
                                          int h0, int w0) {
  if (int(payloads.size()) != stack.scales() + 1)
    throw FormatError("decode_chain_payloads: expected " +
                      std::to_string(stack.scales() + 1) + " payloads, got " +
                      std::to_string(payloads.size()));
  NoGradGuard ng;
  // geometry of every scale from the finest plane
  std::vector<int> hs{h0}, ws{w0};
  for (int s = 0; s < stack.scales(); ++s) {
    hs.push_back((hs.back() + 1) / 2);
    ws.push_back((ws.back() + 1) / 2);
  }
  const auto& channels = stack.channels();
  std::vector<Tensor> chain(size_t(stack.scales()) + 1);
  // raw top scale
  {
    const int S = stack.scales();
    const Shape top{1, channels[size_t(S)], hs[size_t(S)], ws[size_t(S)]};
    if (int64_t(payloads[0].size()) != top.numel())
      throw FormatError("decode_chain_payloads: top scale has " +
                        std::to_string(payloads[0].size()) + " bytes, want " +
                        std::to_string(top.numel()));
    std::vector<float> vals(size_t(top.numel()));
    for (size_t i = 0; i < vals.size(); ++i) vals[i] = float(payloads[0][i]);
    chain[size_t(S)] = Tensor(top, std::move(vals));
  }
  for (int s = stack.scales() - 1; s >= 0; --s) {
    const auto pred =
        stack.predict(s, chain[size_t(s) + 1], hs[size_t(s)], ws[size_t(s)]);
    chain[size_t(s)] = decode_scale_symbols(
        payloads[size_t(stack.scales() - s)], pred, channels[size_t(s)],
        hs[size_t(s)], ws[size_t(s)], stack.mixtures());
  }
  return chain;
}

}  // namespace ntc::msprob
