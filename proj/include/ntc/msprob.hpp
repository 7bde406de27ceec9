// Multi-scale conditional probability model over 8-bit latent symbols.
//
// A chain of strided extractors shrinks the symbol plane scale by scale
// (channels and spatial dims halve, rounding up). Each scale's symbols are
// modeled by a K-component discretized logistic mixture whose parameters are
// predicted from the next-coarser scale; within a site, channel c is shifted
// linearly by channel c-1's symbol. The coarsest scale is stored raw at
// 8 bits per element.
//
// Two evaluation paths share one definition of the model:
//  - a float32 tape path (rate_bits) used as the training rate term, and
//  - a double-precision PMF builder feeding the arithmetic coder, identical
//    on encoder and decoder so their tables match bit for bit.
#pragma once

#include <array>
#include <random>
#include <vector>

#include "ntc/checkpoint.hpp"
#include "ntc/nn.hpp"
#include "ntc/serialize.hpp"
#include "ntc/tensor.hpp"

namespace ntc::msprob {

// probability floor: p <- (1-eps)*p + eps/256. Keeps log-costs finite and
// PMFs strictly positive; symbols the coder could still starve are caught by
// the frequency quantizer, which grants every bin at least one count.
constexpr double kPmfEps = 1.0 / 4096.0;

class ScaleStack {
 public:
  ScaleStack(std::mt19937& rng, int latent_channels, int scales,
             int mixtures);

  int scales() const { return int(extract_.size()); }
  int mixtures() const { return mixtures_; }
  // channel count per scale, entry 0 = the latent itself (size scales+1)
  const std::vector<int>& channels() const { return channels_; }

  // z0 -> [z0, z1, ..., zS]; every tensor holds integers 0..255 and stays on
  // the tape (extractor rounding is straight-through).
  std::vector<Tensor> build_chain(const Tensor& z0) const;

  // Mixture parameters for scale s predicted from z_{s+1}, cropped to the
  // finer scale's (h, w). mu includes the +127.5 center; scale is positive;
  // pi is normalized over the K mixture planes.
  struct Prediction {
    Tensor mu;     // (n, K*C_s, h, w), component-major
    Tensor lam;    // (n, K*C_s, h, w) previous-channel coupling
    Tensor scale;  // (n, K*C_s, h, w), >= 1e-3
    Tensor pi;     // (n, K, h, w)
  };
  Prediction predict(int s, const Tensor& z_next, int h, int w) const;

  // Total batch bits: mixture cost of scales 0..S-1 plus 8 bits per element
  // of the raw top scale. Scalar on the tape.
  Tensor rate_bits(const std::vector<Tensor>& chain) const;

  std::vector<Tensor> parameters() const;
  void named_parameters(const std::string& prefix, NamedTensors& out) const;

 private:
  std::vector<std::array<nn::ConvLayer, 3>> extract_;  // z_s -> z_{s+1}
  std::vector<std::array<nn::ConvLayer, 3>> predict_;  // z_{s+1} -> params
  std::vector<int> channels_;
  int mixtures_ = 0;
};

// Floored mixture bin mass in double precision; mu[k] must already include
// the previous-channel shift. Exposed for the quadrature tests.
double bin_probability(int q, int K, const double* pi, const double* mu,
                       const double* s);

// Arithmetic-coded payload for one scale's symbols (batch of one).
io::Bytes encode_scale_symbols(const Tensor& z,
                               const ScaleStack::Prediction& pred,
                               int mixtures);
Tensor decode_scale_symbols(std::span<const uint8_t> payload,
                            const ScaleStack::Prediction& pred, int c, int h,
                            int w, int mixtures);

// Whole chain -> payload per scale, coarsest first (index 0 is raw z_S).
std::vector<io::Bytes> encode_chain_payloads(const ScaleStack& stack,
                                             const std::vector<Tensor>& chain);
// Rebuild every scale from payloads given the finest plane's geometry.
std::vector<Tensor> decode_chain_payloads(const ScaleStack& stack,
                                          std::span<const io::Bytes> payloads,
                                          int h0, int w0);

}  // namespace ntc::msprob
