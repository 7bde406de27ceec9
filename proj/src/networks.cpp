#include "ntc/networks.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ntc/mask.hpp"
#include "ntc/ops.hpp"

namespace ntc::net {
namespace op = ntc::ops;

namespace {

void check_config(const ModelConfig& cfg) {
  if (cfg.scales < 0 || cfg.scales > 8)
    throw ShapeError("model scales must be in [0, 8], got " +
                     std::to_string(cfg.scales));
  if (cfg.mixtures < 1 || cfg.mixtures > 16)
    throw ShapeError("model mixtures must be in [1, 16], got " +
                     std::to_string(cfg.mixtures));
}

std::vector<nn::ConvLayer> make_net(
    std::mt19937& rng,
    std::initializer_list<std::array<int, 4>> specs) {  // in, out, k, stride
  std::vector<nn::ConvLayer> net;
  for (const auto& s : specs)
    net.push_back(nn::make_conv(rng, s[0], s[1], s[2], s[3], s[2] / 2));
  return net;
}

void add_net(NamedTensors& out, const std::string& name,
             const std::vector<nn::ConvLayer>& net) {
  for (size_t i = 0; i < net.size(); ++i) {
    out.emplace_back(name + "." + std::to_string(i) + ".w", net[i].w);
    out.emplace_back(name + "." + std::to_string(i) + ".b", net[i].b);
  }
}

Tensor meta_scalar(float v) {
  return Tensor(Shape{1, 1, 1, 1}, std::vector<float>{v});
}

}  // namespace

CodecModel::CodecModel(std::mt19937& rng, const ModelConfig& cfg)
    : cfg_((check_config(cfg), cfg)),
      psi_(make_net(rng, {{3, 20, 3, 2}, {20, 40, 3, 2}, {40, 40, 3, 1}})),
      phi_e_(make_net(rng, {{40, 80, 3, 2}, {80, 40, 3, 1}, {40, 10, 3, 1}})),
      upsilon_(
          make_net(rng, {{40, 40, 3, 2}, {40, 20, 3, 1}, {20, 1, 3, 1}})),
      phi_d_(
          make_net(rng, {{10, 40, 3, 1}, {40, 320, 3, 1}, {80, 40, 3, 1}})),
      theta_(make_net(rng, {{40, 80, 3, 1}, {20, 12, 3, 1}, {3, 3, 3, 1}})),
      attn_(make_net(rng, {{80, 160, 3, 1}, {40, 12, 3, 1}, {3, 3, 3, 1}})),
      rho_(nn::make_conv(rng, 3, 3, 1, 1, 0)),
      prob_(rng, kLatentChannels, cfg.scales, cfg.mixtures) {}

Tensor CodecModel::embed(const Tensor& f) const {
  Tensor t = op::leaky_relu(nn::apply(psi_[0], f));
  t = op::leaky_relu(nn::apply(psi_[1], t));
  return nn::apply(psi_[2], t);
}

Tensor CodecModel::encode_diff(const Tensor& de) const {
  Tensor t = op::leaky_relu(nn::apply(phi_e_[0], de));
  t = op::leaky_relu(nn::apply(phi_e_[1], t));
  return nn::apply(phi_e_[2], t);
}

Tensor CodecModel::importance(const Tensor& de) const {
  Tensor t = op::leaky_relu(nn::apply(upsilon_[0], de));
  t = op::leaky_relu(nn::apply(upsilon_[1], t));
  return op::sigmoid(nn::apply(upsilon_[2], t));
}

Tensor CodecModel::decode_latent(const Tensor& yhat,
                                 const Tensor& e_prev) const {
  Tensor t = op::leaky_relu(nn::apply(phi_d_[0], yhat));
  t = op::leaky_relu(op::pixel_shuffle(nn::apply(phi_d_[1], t), 2));
  return op::add(e_prev, nn::apply(phi_d_[2], t));
}

Tensor CodecModel::reconstruct(const Tensor& ehat) const {
  Tensor t = op::leaky_relu(op::pixel_shuffle(nn::apply(theta_[0], ehat), 2));
  t = op::leaky_relu(op::pixel_shuffle(nn::apply(theta_[1], t), 2));
  return op::clamp(nn::apply(theta_[2], t), 0.f, 1.f);
}

Tensor CodecModel::attention(const Tensor& ehat, const Tensor& e_prev) const {
  Tensor t = op::concat_channels(ehat, e_prev);
  t = op::leaky_relu(op::pixel_shuffle(nn::apply(attn_[0], t), 2));
  t = op::leaky_relu(op::pixel_shuffle(nn::apply(attn_[1], t), 2));
  return op::sigmoid(nn::apply(attn_[2], t));
}

Tensor CodecModel::blend(const Tensor& a, const Tensor& recon,
                         const Tensor& f_prev) const {
  Tensor keep = op::add_scalar(op::mul_scalar(a, -1.f), 1.f);
  Tensor mixed = op::add(op::mul(a, recon), op::mul(keep, f_prev));
  return op::clamp(nn::apply(rho_, mixed), 0.f, 1.f);
}

std::vector<Tensor> CodecModel::parameters() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

NamedTensors CodecModel::named_parameters() const {
  NamedTensors out;
  add_net(out, "psi", psi_);
  add_net(out, "phi_e", phi_e_);
  add_net(out, "upsilon", upsilon_);
  add_net(out, "phi_d", phi_d_);
  add_net(out, "theta", theta_);
  add_net(out, "attn", attn_);
  out.emplace_back("rho.w", rho_.w);
  out.emplace_back("rho.b", rho_.b);
  prob_.named_parameters("prob.", out);
  return out;
}

Forward forward_pass(const CodecModel& m, const Tensor& f_prev,
                     const Tensor& f_cur, Mode mode) {
  const Shape s = f_prev.shape();
  if (!(s == f_cur.shape()))
    throw ShapeError("frame pair shapes differ: " + s.str() + " vs " +
                     f_cur.shape().str());
  if (s.c != 3 || s.h % 8 != 0 || s.w % 8 != 0)
    throw ShapeError("frames must be 3-channel with dims divisible by 8, got " +
                     s.str());

  Tensor e_prev = m.embed(f_prev);
  Tensor e_cur = m.embed(f_cur);
  Tensor de = op::sub(e_cur, e_prev);
  Tensor y = m.encode_diff(de);

  Forward out;
  Tensor y_m = y;
  if (m.config().use_importance) {
    out.tau = m.importance(de);
    if (mode == Mode::train) {
      y_m = op::mul(y, op::soft_prefix_mask(out.tau, kLatentChannels));
    } else {
      Tensor tau_q = mask::quantize_tau(out.tau, kLatentChannels);
      y_m = op::mul(y, mask::hard_prefix_mask(tau_q, kLatentChannels));
    }
  }

  quant::LatentQuant q = quant::quantize_latent(y_m);
  out.symbols = q.symbols;
  out.dequant = q.dequantized;
  out.ranges = std::move(q.ranges);

  Tensor ehat = m.decode_latent(out.dequant, e_prev);
  out.recon_initial = m.reconstruct(ehat);
  if (m.config().use_attention) {
    Tensor a = m.attention(ehat, e_prev);
    out.recon = m.blend(a, out.recon_initial, f_prev);
  } else {
    out.recon = out.recon_initial;
  }

  if (mode == Mode::train)
    out.rate_bits = m.prob().rate_bits(m.prob().build_chain(out.symbols));
  return out;
}

NamedTensors model_state(const CodecModel& m) {
  const ModelConfig& c = m.config();
  NamedTensors out;
  out.emplace_back("meta.latent_channels", meta_scalar(float(kLatentChannels)));
  out.emplace_back("meta.scales", meta_scalar(float(c.scales)));
  out.emplace_back("meta.mixtures", meta_scalar(float(c.mixtures)));
  out.emplace_back("meta.use_attention", meta_scalar(c.use_attention ? 1.f : 0.f));
  out.emplace_back("meta.use_importance",
                   meta_scalar(c.use_importance ? 1.f : 0.f));
  NamedTensors weights = m.named_parameters();
  out.insert(out.end(), weights.begin(), weights.end());
  return out;
}

void save_model(const CodecModel& m, const std::string& path) {
  save_checkpoint(path, model_state(m));
}

CodecModel load_model(const std::string& path) {
  NamedTensors entries = load_checkpoint(path);
  auto find = [&](const std::string& name) -> const Tensor& {
    for (const auto& [n, t] : entries)
      if (n == name) return t;
    throw FormatError("checkpoint is missing entry '" + name + "'");
  };
  auto meta_int = [&](const std::string& name) {
    const Tensor& t = find(name);
    if (t.numel() != 1)
      throw FormatError("checkpoint meta entry '" + name +
                        "' must hold one value");
    return int(std::lround(t.values()[0]));
  };

  if (meta_int("meta.latent_channels") != kLatentChannels)
    throw FormatError("checkpoint latent width " +
                      std::to_string(meta_int("meta.latent_channels")) +
                      " does not match this build (" +
                      std::to_string(kLatentChannels) + ")");
  ModelConfig cfg;
  cfg.scales = meta_int("meta.scales");
  cfg.mixtures = meta_int("meta.mixtures");
  cfg.use_attention = meta_int("meta.use_attention") != 0;
  cfg.use_importance = meta_int("meta.use_importance") != 0;
  if (cfg.scales < 0 || cfg.scales > 8 || cfg.mixtures < 1 ||
      cfg.mixtures > 16)
    throw FormatError("checkpoint meta configuration out of range");

  std::mt19937 rng(0);  // placeholder weights, overwritten below
  CodecModel m(rng, cfg);

  NamedTensors want = m.named_parameters();
  std::set<std::string> known = {"meta.latent_channels", "meta.scales",
                                 "meta.mixtures", "meta.use_attention",
                                 "meta.use_importance"};
  for (auto& [name, dst] : want) {
    const Tensor& src = find(name);
    if (!(src.shape() == dst.shape()))
      throw FormatError("checkpoint entry '" + name + "' has shape " +
                        src.shape().str() + ", expected " +
                        dst.shape().str());
    std::copy(src.values().begin(), src.values().end(),
              dst.values().begin());
    known.insert(name);
  }
  for (const auto& [name, t] : entries)
    if (!known.count(name))
      throw FormatError("checkpoint has unexpected entry '" + name + "'");
  return m;
}

}  // namespace ntc::net
