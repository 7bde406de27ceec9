// The seven codec networks and the frame-pair forward pipeline.
//
// A shared frame encoder maps each RGB frame to an embedding at 1/4
// resolution. The embedding difference is compressed to a 10-channel latent
// at 1/8 resolution, importance-masked, quantized to 8 bits, and decoded
// through the mirrored path back to an embedding and then a frame. An
// attention map blends that raw reconstruction with the previous frame
// wherever copying beats synthesis. Every stage lives on the autodiff tape,
// so the same code path serves training and deployment.
#pragma once

#include <random>
#include <string>
#include <vector>

#include "ntc/checkpoint.hpp"
#include "ntc/msprob.hpp"
#include "ntc/nn.hpp"
#include "ntc/quant.hpp"
#include "ntc/tensor.hpp"

namespace ntc::net {

constexpr int kEmbedChannels = 40;   // frame-embedding width
constexpr int kLatentChannels = 10;  // coded latent width

struct ModelConfig {
  int scales = 2;    // probability-model chain depth
  int mixtures = 3;  // logistic mixture components per symbol
  bool use_attention = true;
  bool use_importance = true;
};

class CodecModel {
 public:
  // Weight layout depends only on (scales, mixtures); the boolean flags
  // select forward paths, so ablated and full models share checkpoints.
  CodecModel(std::mt19937& rng, const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }

  // Encoder-side stages.
  Tensor embed(const Tensor& frame) const;     // (3,H,W) -> (40,H/4,W/4)
  Tensor encode_diff(const Tensor& de) const;  // (40,..) -> (10,H/8,W/8)
  Tensor importance(const Tensor& de) const;   // (40,..) -> (1,H/8,W/8) [0,1]

  // Decoder-side stages (the decode path never sees the current frame).
  Tensor decode_latent(const Tensor& yhat, const Tensor& e_prev) const;
  Tensor reconstruct(const Tensor& ehat) const;  // -> (3,H,W) clamped [0,1]
  Tensor attention(const Tensor& ehat, const Tensor& e_prev) const;
  Tensor blend(const Tensor& a, const Tensor& recon,
               const Tensor& f_prev) const;  // clamp(1x1 conv(mix))

  msprob::ScaleStack& prob() { return prob_; }
  const msprob::ScaleStack& prob() const { return prob_; }

  // Trainable tensors in a stable order (matches named_parameters).
  std::vector<Tensor> parameters() const;
  NamedTensors named_parameters() const;

 private:
  ModelConfig cfg_;
  // Declaration order fixes the seed-to-weights mapping; keep it stable.
  std::vector<nn::ConvLayer> psi_;      // frame -> embedding
  std::vector<nn::ConvLayer> phi_e_;    // diff embedding -> latent
  std::vector<nn::ConvLayer> upsilon_;  // diff embedding -> importance
  std::vector<nn::ConvLayer> phi_d_;    // latent -> embedding residual
  std::vector<nn::ConvLayer> theta_;    // embedding -> frame
  std::vector<nn::ConvLayer> attn_;     // embeddings -> blend map
  nn::ConvLayer rho_;                   // 1x1 mix conv
  msprob::ScaleStack prob_;
};

enum class Mode { train, eval };

struct Forward {
  Tensor recon;          // final reconstruction, clamped to [0,1]
  Tensor recon_initial;  // pre-blend reconstruction (== recon w/o attention)
  Tensor tau;            // importance map; undefined when importance is off
  Tensor symbols;        // latent symbols 0..255 (straight-through in train)
  Tensor dequant;        // dequantized latent fed to the decoder path
  std::vector<quant::Range> ranges;  // per-sample quantizer ranges
  Tensor rate_bits;  // train mode only: model's bit estimate for the batch
};

// Train mode: soft channel mask, straight-through quantization, rate term.
// Eval mode: hard mask from the level-quantized map, no rate estimate.
Forward forward_pass(const CodecModel& m, const Tensor& f_prev,
                     const Tensor& f_cur, Mode mode);

// Checkpoint round trip. The archive holds every weight plus meta.* scalars
// recording the configuration; load rejects any mismatch by name or shape.
NamedTensors model_state(const CodecModel& m);
void save_model(const CodecModel& m, const std::string& path);
CodecModel load_model(const std::string& path);

}  // namespace ntc::net
