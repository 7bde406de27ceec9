#include "ntc/train.hpp"

#include <cstdio>
#include <filesystem>
#include <numeric>
#include <ostream>
#include <random>
#include <utility>

#include "ntc/container.hpp"
#include "ntc/metrics.hpp"
#include "ntc/nn.hpp"
#include "ntc/ops.hpp"
#include "ntc/pipeline.hpp"
#include "ntc/ppm.hpp"

namespace ntc::train {
namespace op = ntc::ops;

double schedule(double start, double end, int64_t step, int64_t total) {
  if (total <= 1) return start;
  const double f = double(step) / double(total - 1);
  return start * (1.0 - f) + end * f;
}

Tensor total_loss(const Tensor& recon, const Tensor& target,
                  const Tensor& rate, const Tensor& tau, const LossWeights& w,
                  StepStats* stats) {
  Tensor ms = metrics::ms_ssim(recon, target);
  Tensor d1 = op::add_scalar(op::mul_scalar(ms, -1.f), 1.f);
  Tensor diff = op::sub(recon, target);
  Tensor d2 = op::mean_all(op::mul(diff, diff));
  Tensor loss = op::add(op::mul_scalar(d1, float(w.lambda_msssim)),
                        op::mul_scalar(d2, float(w.lambda_mse)));
  loss = op::add(loss, op::mul_scalar(rate, float(w.lambda_rate)));
  double mask_val = 0;
  if (tau.defined() && w.lambda_mask != 0) {
    Tensor pen = op::abs(op::add_scalar(op::mean_all(tau), -float(w.beta)));
    loss = op::add(loss, op::mul_scalar(pen, float(w.lambda_mask)));
    mask_val = pen.item();
  }
  if (stats) {
    stats->lambda_rate = w.lambda_rate;
    stats->lambda_mask = w.lambda_mask;
    stats->beta = w.beta;
    stats->d_msssim = d1.item();
    stats->d_mse = d2.item();
    stats->rate = rate.item();
    stats->mask = mask_val;
    stats->total = loss.item();
  }
  return loss;
}

namespace {

struct LoadedPair {
  Tensor prev, cur;
  std::string name;  // current-frame file name, used in evaluation rows
};

// Loads every readable pair; problems with individual pairs are warnings,
// problems with the manifest itself propagate.
std::vector<LoadedPair> load_pairs(const std::string& manifest_path,
                                   int min_dim, std::ostream* warnings,
                                   int* skipped) {
  std::vector<LoadedPair> out;
  for (const pipeline::ManifestEntry& e :
       pipeline::read_manifest(manifest_path)) {
    try {
      Tensor prev = ppm::read(e.prev);
      Tensor cur = ppm::read(e.cur);
      if (!(prev.shape() == cur.shape()))
        throw ShapeError("frame sizes differ: " + prev.shape().str() +
                         " vs " + cur.shape().str());
      if (prev.shape().h < min_dim || prev.shape().w < min_dim)
        throw ShapeError("frames smaller than " + std::to_string(min_dim) +
                         " px");
      out.push_back({std::move(prev), std::move(cur),
                     std::filesystem::path(e.cur).filename().string()});
    } catch (const std::runtime_error& ex) {
      ++*skipped;
      if (warnings)
        *warnings << "skipping " << e.prev << " / " << e.cur << ": "
                  << ex.what() << "\n";
    }
  }
  return out;
}

void check_config(const TrainConfig& c) {
  if (c.steps < 0 || c.batch < 1 || c.crop < 8 || c.crop % 8 != 0)
    throw FormatError(
        "training config: steps >= 0, batch >= 1, crop a multiple of 8");
  for (double v : {c.lr_start, c.lr_end, c.lambda_rate_start,
                   c.lambda_rate_end, c.lambda_mask_start, c.lambda_mask_end,
                   c.beta_start, c.beta_end})
    if (!(v >= 0))
      throw FormatError("training config: all schedule endpoints must be >= 0");
}

}  // namespace

FitResult fit(net::CodecModel& m, const std::string& manifest_path,
              const TrainConfig& cfg, std::ostream* metrics_log,
              std::ostream* warnings) {
  check_config(cfg);
  FitResult out;
  std::vector<LoadedPair> pairs =
      load_pairs(manifest_path, cfg.crop, warnings, &out.skipped);
  if (cfg.steps == 0) return out;  // checkpoint stays at initialization
  if (pairs.empty())
    throw FormatError("no usable training pairs in " + manifest_path);

  std::mt19937 rng(cfg.seed);
  auto draw = [&](uint32_t bound) { return bound ? rng() % bound : 0u; };
  std::vector<size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), size_t(0));
  size_t cursor = order.size();  // forces a shuffle on the first draw

  std::vector<Tensor> params = m.parameters();
  nn::Adam adam;
  const int B = cfg.batch, C = cfg.crop;

  for (int64_t t = 0; t < cfg.steps; ++t) {
    Tensor prev(Shape{B, 3, C, C});
    Tensor cur(Shape{B, 3, C, C});
    auto pv = prev.values();
    auto cv = cur.values();
    for (int b = 0; b < B; ++b) {
      if (cursor == order.size()) {
        for (size_t i = order.size() - 1; i > 0; --i)
          std::swap(order[i], order[draw(uint32_t(i + 1))]);
        cursor = 0;
      }
      const LoadedPair& p = pairs[order[cursor++]];
      const Shape s = p.prev.shape();
      const int y0 = int(draw(uint32_t(s.h - C + 1)));
      const int x0 = int(draw(uint32_t(s.w - C + 1)));
      auto sp = p.prev.values();
      auto sc = p.cur.values();
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < C; ++y)
          for (int x = 0; x < C; ++x) {
            const size_t di = size_t(((b * 3 + c) * C + y) * C + x);
            const size_t si = size_t((c * s.h + y0 + y) * s.w + x0 + x);
            pv[di] = sp[si];
            cv[di] = sc[si];
          }
    }

    StepStats st;
    st.step = t;
    st.lr = schedule(cfg.lr_start, cfg.lr_end, t, cfg.steps);
    LossWeights w;
    w.lambda_rate =
        schedule(cfg.lambda_rate_start, cfg.lambda_rate_end, t, cfg.steps);
    w.lambda_mask =
        m.config().use_importance
            ? schedule(cfg.lambda_mask_start, cfg.lambda_mask_end, t,
                       cfg.steps)
            : 0.0;
    w.beta = schedule(cfg.beta_start, cfg.beta_end, t, cfg.steps);

    for (const Tensor& p : params) p.node()->grad.clear();
    net::Forward f = net::forward_pass(m, prev, cur, net::Mode::train);
    Tensor rate = op::mul_scalar(f.rate_bits, 1.f / float(B));
    Tensor loss = total_loss(f.recon, cur, rate, f.tau, w, &st);
    backward(loss);
    adam.step(params, float(st.lr));

    if (metrics_log) {
      char line[256];
      std::snprintf(line, sizeof line,
                    "%lld %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g",
                    static_cast<long long>(st.step), st.lr, st.lambda_rate,
                    st.lambda_mask, st.beta, st.d_msssim, st.d_mse, st.rate,
                    st.mask, st.total);
      *metrics_log << line << '\n';
    }
    out.stats.push_back(st);
  }
  return out;
}

EvalResult evaluate(const net::CodecModel& m, const std::string& manifest_path,
                    std::ostream* warnings) {
  EvalResult out;
  std::vector<LoadedPair> pairs =
      load_pairs(manifest_path, 4, warnings, &out.skipped);
  NoGradGuard ng;
  out.mean.name = "mean";
  for (const LoadedPair& p : pairs) {
    pipeline::EncodeResult enc = pipeline::encode_frame_pair(m, p.prev, p.cur);
    io::Bytes bytes = container::serialize(enc.container);
    container::Container parsed =
        container::parse(bytes, m.prob().scales() + 1);
    Tensor dec = pipeline::decode_frame(m, p.prev, parsed);

    EvalRow r;
    r.name = p.name;
    r.msssim = metrics::ms_ssim(dec, p.cur).item();
    r.psnr = metrics::psnr(dec, p.cur);
    r.bpp = metrics::bpp(bytes.size(), p.cur.shape().w, p.cur.shape().h);
    r.copy_msssim = metrics::ms_ssim(p.prev, p.cur).item();
    out.mean.msssim += r.msssim;
    out.mean.psnr += r.psnr;
    out.mean.bpp += r.bpp;
    out.mean.copy_msssim += r.copy_msssim;
    out.rows.push_back(std::move(r));
  }
  if (!out.rows.empty()) {
    const double n = double(out.rows.size());
    out.mean.msssim /= n;
    out.mean.psnr /= n;
    out.mean.bpp /= n;
    out.mean.copy_msssim /= n;
  }
  return out;
}

void write_eval_csv(const EvalResult& r, const std::string& path) {
  std::string text = "pair,msssim,psnr,bpp,copy_msssim\n";
  auto add_row = [&text](const EvalRow& row) {
    char line[512];
    std::snprintf(line, sizeof line, "%s,%.6f,%.4f,%.6f,%.6f\n",
                  row.name.c_str(), row.msssim, row.psnr, row.bpp,
                  row.copy_msssim);
    text += line;
  };
  for (const EvalRow& row : r.rows) add_row(row);
  add_row(r.mean);
  io::write_file_atomic(
      path, {reinterpret_cast<const uint8_t*>(text.data()), text.size()});
}

}  // namespace ntc::train
