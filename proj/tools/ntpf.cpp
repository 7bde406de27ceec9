// ntpf: command-line front end for the P-frame codec. Subcommands train a
// model, encode/decode single frame pairs, evaluate a manifest through the
// real byte stream, verify bit-exact round trips, and generate the synthetic
// translating-texture dataset.
#include <cstdio>

#include <exception>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ntc/container.hpp"
#include "ntc/metrics.hpp"
#include "ntc/networks.hpp"
#include "ntc/pipeline.hpp"
#include "ntc/ppm.hpp"
#include "ntc/synth.hpp"
#include "ntc/train.hpp"

namespace {

using namespace ntc;

constexpr int kExitOk = 0;      // success
constexpr int kExitUsage = 1;   // bad invocation
constexpr int kExitIo = 2;      // missing/malformed inputs, write failures
constexpr int kExitVerify = 3;  // a bit-exactness check failed

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) return false;
  auto av = a.values(), bv = b.values();
  for (size_t i = 0; i < av.size(); ++i)
    if (av[i] != bv[i]) return false;
  return true;
}

struct ModelFlags {
  int scales = 2;
  int mixtures = 3;
  bool no_attention = false;
  bool no_importance = false;
};

// --- flat key=value configuration files ------------------------------------

std::vector<std::pair<std::string, std::string>> read_flat_config(
    const std::string& path) {
  const io::Bytes data = io::read_file(path);
  std::vector<std::pair<std::string, std::string>> kv;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const char* ws = " \t";
    const size_t a = s.find_first_not_of(ws);
    if (a == std::string::npos) return std::string();
    return s.substr(a, s.find_last_not_of(ws) - a + 1);
  };
  for (size_t i = 0; i <= data.size(); ++i) {
    if (i < data.size() && data[i] != '\n') {
      line.push_back(char(data[i]));
      continue;
    }
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    line.clear();
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos || eq == 0)
      throw FormatError(path + " line " + std::to_string(lineno) +
                        " is not key=value");
    kv.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return kv;
}

long long parse_ll(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (...) {
    throw FormatError("config: " + key + " needs an integer, got '" + v + "'");
  }
}

double parse_d(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (...) {
    throw FormatError("config: " + key + " needs a number, got '" + v + "'");
  }
}

bool parse_b(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw FormatError("config: " + key + " needs true/false, got '" + v + "'");
}

// Applies a config file to the train settings. Options given on the command
// line keep their values; `given` reports those.
void apply_train_config(const std::string& path,
                        const std::function<bool(const std::string&)>& given,
                        ModelFlags& mf, train::TrainConfig& tc,
                        std::string& log_path) {
  for (const auto& [k, v] : read_flat_config(path)) {
    if (given("--" + k)) continue;
    if (k == "seed")
      tc.seed = uint32_t(parse_ll(k, v));
    else if (k == "steps")
      tc.steps = int(parse_ll(k, v));
    else if (k == "batch")
      tc.batch = int(parse_ll(k, v));
    else if (k == "crop")
      tc.crop = int(parse_ll(k, v));
    else if (k == "lr-start")
      tc.lr_start = parse_d(k, v);
    else if (k == "lr-end")
      tc.lr_end = parse_d(k, v);
    else if (k == "lambda-rate-start")
      tc.lambda_rate_start = parse_d(k, v);
    else if (k == "lambda-rate-end")
      tc.lambda_rate_end = parse_d(k, v);
    else if (k == "lambda-mask-start")
      tc.lambda_mask_start = parse_d(k, v);
    else if (k == "lambda-mask-end")
      tc.lambda_mask_end = parse_d(k, v);
    else if (k == "beta-start")
      tc.beta_start = parse_d(k, v);
    else if (k == "beta-end")
      tc.beta_end = parse_d(k, v);
    else if (k == "scales")
      mf.scales = int(parse_ll(k, v));
    else if (k == "mixtures")
      mf.mixtures = int(parse_ll(k, v));
    else if (k == "no-attention")
      mf.no_attention = parse_b(k, v);
    else if (k == "no-importance")
      mf.no_importance = parse_b(k, v);
    else if (k == "log")
      log_path = v;
    else
      throw FormatError("config: unknown key '" + k + "'");
  }
}

net::ModelConfig to_model_config(const ModelFlags& f) {
  net::ModelConfig mc;
  mc.scales = f.scales;
  mc.mixtures = f.mixtures;
  mc.use_attention = !f.no_attention;
  mc.use_importance = !f.no_importance;
  return mc;
}

// Coded symbol count at each scale of the chain for a padded frame.
std::vector<int64_t> symbols_per_scale(const net::CodecModel& m, int padded_h,
                                       int padded_w) {
  std::vector<int64_t> out;
  int h = padded_h / 8, w = padded_w / 8;
  for (int s = 0; s <= m.prob().scales(); ++s) {
    out.push_back(int64_t(m.prob().channels()[size_t(s)]) * h * w);
    h = (h + 1) / 2;
    w = (w + 1) / 2;
  }
  return out;
}

int cmd_train(const std::string& manifest, const std::string& out,
              const std::string& log_path, const ModelFlags& mf,
              const train::TrainConfig& tc) {
  std::mt19937 rng(tc.seed);
  net::CodecModel model(rng, to_model_config(mf));

  std::ofstream log;
  std::ostream* logp = nullptr;
  if (!log_path.empty()) {
    log.open(log_path, std::ios::trunc);
    if (!log) throw IoError("cannot open metrics log " + log_path);
    logp = &log;
  }

  train::FitResult r = train::fit(model, manifest, tc, logp, &std::cerr);
  net::save_model(model, out);

  if (r.skipped > 0)
    std::fprintf(stderr, "skipped %d unusable pair(s)\n", r.skipped);
  if (r.stats.empty()) {
    std::printf("wrote initialization checkpoint %s (0 steps)\n", out.c_str());
  } else {
    const train::StepStats& last = r.stats.back();
    std::printf("wrote %s after %zu steps; final loss %.6g "
                "(msssim %.6g, mse %.6g, bits/sample %.6g)\n",
                out.c_str(), r.stats.size(), last.total, last.d_msssim,
                last.d_mse, last.rate);
  }
  return kExitOk;
}

int cmd_encode(const std::string& ckpt, const std::string& prev_path,
               const std::string& cur_path, const std::string& out) {
  net::CodecModel model = net::load_model(ckpt);
  Tensor prev = ppm::read(prev_path);
  Tensor cur = ppm::read(cur_path);

  pipeline::EncodeResult enc = pipeline::encode_frame_pair(model, prev, cur);
  io::Bytes bytes = container::serialize(enc.container);
  io::write_file_atomic(out, bytes);

  const container::Header& hd = enc.container.header;
  std::printf("wrote %s: %zu bytes, %.6f bpp over %dx%d\n", out.c_str(),
              bytes.size(), metrics::bpp(bytes.size(), hd.orig_w, hd.orig_h),
              hd.orig_w, hd.orig_h);
  std::vector<int64_t> counts =
      symbols_per_scale(model, hd.padded_h, hd.padded_w);
  std::printf("symbols per scale (finest first):");
  for (int64_t n : counts) std::printf(" %lld", static_cast<long long>(n));
  std::printf("\n");
  return kExitOk;
}

int cmd_decode(const std::string& ckpt, const std::string& prev_path,
               const std::string& in, const std::string& out) {
  net::CodecModel model = net::load_model(ckpt);
  Tensor prev = ppm::read(prev_path);
  container::Container c =
      container::read_file(in, model.prob().scales() + 1);
  Tensor rec = pipeline::decode_frame(model, prev, c);
  ppm::write(out, rec);
  std::printf("wrote %s (%dx%d)\n", out.c_str(), c.header.orig_w,
              c.header.orig_h);
  return kExitOk;
}

int cmd_eval(const std::string& ckpt, const std::string& manifest,
             const std::string& out) {
  net::CodecModel model = net::load_model(ckpt);
  train::EvalResult r = train::evaluate(model, manifest, &std::cerr);
  train::write_eval_csv(r, out);
  if (r.skipped > 0)
    std::fprintf(stderr, "skipped %d unusable pair(s)\n", r.skipped);
  std::printf("wrote %s: %zu pairs, mean msssim %.6f, psnr %.4f, "
              "bpp %.6f, copy msssim %.6f\n",
              out.c_str(), r.rows.size(), r.mean.msssim, r.mean.psnr,
              r.mean.bpp, r.mean.copy_msssim);
  return kExitOk;
}

int cmd_roundtrip(const std::string& ckpt, const std::string& manifest) {
  net::CodecModel model = net::load_model(ckpt);
  std::vector<pipeline::ManifestEntry> entries =
      pipeline::read_manifest(manifest);
  NoGradGuard ng;

  int mismatches = 0;
  for (const pipeline::ManifestEntry& e : entries) {
    Tensor prev = ppm::read(e.prev);
    Tensor cur = ppm::read(e.cur);
    pipeline::EncodeResult enc = pipeline::encode_frame_pair(model, prev, cur);
    io::Bytes bytes = container::serialize(enc.container);
    container::Container parsed =
        container::parse(bytes, model.prob().scales() + 1);

    const bool symbols_ok =
        bitwise_equal(pipeline::decode_latent_symbols(model, parsed),
                      enc.symbols);
    Tensor dec = pipeline::decode_frame(model, prev, parsed);
    const bool recon_ok = bitwise_equal(dec, enc.recon);
    if (!symbols_ok || !recon_ok) ++mismatches;

    std::printf("%s: %s msssim %.6f psnr %.4f bpp %.6f\n", e.cur.c_str(),
                symbols_ok && recon_ok ? "ok" : "MISMATCH",
                metrics::ms_ssim(dec, cur).item(), metrics::psnr(dec, cur),
                metrics::bpp(bytes.size(), cur.shape().w, cur.shape().h));
  }
  std::printf("%zu pair(s), %d mismatch(es)\n", entries.size(), mismatches);
  return mismatches == 0 ? kExitOk : kExitVerify;
}

int cmd_synth(const std::string& dir, int count, uint32_t seed, int height,
              int width, int max_shift) {
  const std::string manifest =
      synth::write_dataset(dir, count, seed, height, width, max_shift);
  std::printf("wrote %d pair(s); manifest %s\n", count, manifest.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neural P-frame codec"};
  app.require_subcommand(1);

  ModelFlags mf;
  train::TrainConfig tc;
  std::string manifest, ckpt, prev, cur, in, out, log_path, dir;
  int count = 20, height = 64, width = 64, max_shift = 4;
  uint32_t synth_seed = 1;

  auto add_model_flags = [&mf](CLI::App* c) {
    c->add_option("--scales", mf.scales, "probability-model scales");
    c->add_option("--mixtures", mf.mixtures, "logistic mixture components");
    c->add_flag("--no-attention", mf.no_attention,
                "skip attention blending (reconstruction used directly)");
    c->add_flag("--no-importance", mf.no_importance,
                "disable importance masking and its loss term");
  };

  CLI::App* t = app.add_subcommand("train", "train a model on a manifest");
  t->add_option("manifest", manifest, "frame-pair manifest (prev<TAB>cur)")
      ->required();
  t->add_option("--out", out, "checkpoint output path")->required();
  t->add_option("--log", log_path, "metrics log output path");
  t->add_option("--seed", tc.seed, "RNG seed for init and batch order");
  t->add_option("--steps", tc.steps, "optimizer steps");
  t->add_option("--batch", tc.batch, "crops per step");
  t->add_option("--crop", tc.crop, "square crop size (multiple of 8)");
  t->add_option("--lr-start", tc.lr_start, "learning rate at step 0");
  t->add_option("--lr-end", tc.lr_end, "learning rate at the final step");
  t->add_option("--lambda-rate-start", tc.lambda_rate_start,
                "rate weight at step 0");
  t->add_option("--lambda-rate-end", tc.lambda_rate_end,
                "rate weight at the final step");
  t->add_option("--lambda-mask-start", tc.lambda_mask_start,
                "importance-budget weight at step 0");
  t->add_option("--lambda-mask-end", tc.lambda_mask_end,
                "importance-budget weight at the final step");
  t->add_option("--beta-start", tc.beta_start, "budget target at step 0");
  t->add_option("--beta-end", tc.beta_end, "budget target at the final step");
  add_model_flags(t);
  std::string config_path;
  t->add_option("--config", config_path,
                "flat key=value option file; command-line flags win");

  CLI::App* e = app.add_subcommand("encode", "code one frame pair");
  e->add_option("checkpoint", ckpt, "model checkpoint")->required();
  e->add_option("prev", prev, "previous frame (P6)")->required();
  e->add_option("cur", cur, "current frame (P6)")->required();
  e->add_option("--out", out, "container output path")->required();

  CLI::App* d = app.add_subcommand("decode", "reconstruct from a container");
  d->add_option("checkpoint", ckpt, "model checkpoint")->required();
  d->add_option("prev", prev, "previous frame (P6)")->required();
  d->add_option("container", in, "coded container")->required();
  d->add_option("--out", out, "frame output path (P6)")->required();

  CLI::App* v = app.add_subcommand("eval", "score a manifest to CSV");
  v->add_option("checkpoint", ckpt, "model checkpoint")->required();
  v->add_option("manifest", manifest, "frame-pair manifest")->required();
  v->add_option("--out", out, "CSV output path")->required();

  CLI::App* r = app.add_subcommand(
      "roundtrip", "verify bit-exact encode/decode over a manifest");
  r->add_option("checkpoint", ckpt, "model checkpoint")->required();
  r->add_option("manifest", manifest, "frame-pair manifest")->required();

  CLI::App* s =
      app.add_subcommand("synth", "generate a synthetic pair dataset");
  s->add_option("dir", dir, "output directory")->required();
  s->add_option("--count", count, "number of pairs");
  s->add_option("--seed", synth_seed, "generator seed");
  s->add_option("--height", height, "frame height");
  s->add_option("--width", width, "frame width");
  s->add_option("--max-shift", max_shift, "largest translation in pixels");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (t->parsed()) {
      if (!config_path.empty())
        apply_train_config(
            config_path,
            [&](const std::string& o) { return t->count(o) > 0; }, mf, tc,
            log_path);
      return cmd_train(manifest, out, log_path, mf, tc);
    }
    if (e->parsed()) return cmd_encode(ckpt, prev, cur, out);
    if (d->parsed()) return cmd_decode(ckpt, prev, in, out);
    if (v->parsed()) return cmd_eval(ckpt, manifest, out);
    if (r->parsed()) return cmd_roundtrip(ckpt, manifest);
    if (s->parsed())
      return cmd_synth(dir, count, synth_seed, height, width, max_shift);
  } catch (const VerifyError& ex) {
    std::fprintf(stderr, "verification failure: %s\n", ex.what());
    return kExitVerify;
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return kExitIo;
  }
  return kExitUsage;
}
