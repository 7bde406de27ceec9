#include "ntc/pipeline.hpp"

#include <algorithm>
#include <filesystem>

#include "ntc/ops.hpp"
#include "ntc/serialize.hpp"

namespace ntc::pipeline {
namespace op = ntc::ops;

namespace {

int round_up8(int v) { return (v + 7) / 8 * 8; }

void check_frame(const Tensor& f, const char* what) {
  const Shape s = f.shape();
  if (s.n != 1 || s.c != 3 || s.h < 1 || s.w < 1)
    throw ShapeError(std::string(what) + " must be a (1, 3, h, w) frame, got " +
                     s.str());
}

// Element count of the coarsest scale after `scales` ceil-halvings.
size_t top_scale_elems(const msprob::ScaleStack& stack, int h0, int w0) {
  int h = h0, w = w0;
  for (int s = 0; s < stack.scales(); ++s) {
    h = (h + 1) / 2;
    w = (w + 1) / 2;
  }
  return size_t(stack.channels().back()) * size_t(h) * size_t(w);
}

}  // namespace

Tensor pad_to_multiple8(const Tensor& frame) {
  const Shape s = frame.shape();
  const int h = int(s.h), w = int(s.w);
  const int ph = round_up8(h), pw = round_up8(w);
  if (ph == h && pw == w) return frame;

  Tensor out(Shape{s.n, s.c, ph, pw});
  auto src = frame.values();
  auto dst = out.values();
  for (int64_t nc = 0; nc < s.n * s.c; ++nc)
    for (int y = 0; y < ph; ++y) {
      const int sy = std::min(y, h - 1);
      for (int x = 0; x < pw; ++x) {
        const int sx = std::min(x, w - 1);
        dst[size_t((nc * ph + y) * pw + x)] =
            src[size_t((nc * h + sy) * w + sx)];
      }
    }
  return out;
}

EncodeResult encode_frame_pair(const net::CodecModel& m, const Tensor& f_prev,
                               const Tensor& f_cur) {
  check_frame(f_prev, "previous frame");
  check_frame(f_cur, "current frame");
  if (!(f_prev.shape() == f_cur.shape()))
    throw ShapeError("frame pair shapes differ: " + f_prev.shape().str() +
                     " vs " + f_cur.shape().str());

  NoGradGuard ng;
  const int orig_h = int(f_prev.shape().h), orig_w = int(f_prev.shape().w);
  Tensor prev = pad_to_multiple8(f_prev);
  Tensor cur = pad_to_multiple8(f_cur);

  net::Forward f = net::forward_pass(m, prev, cur, net::Mode::eval);
  std::vector<Tensor> chain = m.prob().build_chain(f.symbols);
  std::vector<io::Bytes> payloads =
      msprob::encode_chain_payloads(m.prob(), chain);

  EncodeResult out;
  out.container.header.orig_h = orig_h;
  out.container.header.orig_w = orig_w;
  out.container.header.padded_h = int(prev.shape().h);
  out.container.header.padded_w = int(prev.shape().w);
  out.container.header.range = f.ranges[0];
  out.container.payloads = std::move(payloads);
  out.recon = op::crop_spatial(f.recon, orig_h, orig_w);
  out.symbols = f.symbols;
  return out;
}

Tensor decode_latent_symbols(const net::CodecModel& m,
                             const container::Container& c) {
  const container::Header& hd = c.header;
  if (hd.padded_h != round_up8(hd.orig_h) ||
      hd.padded_w != round_up8(hd.orig_w))
    throw FormatError("container padded size does not match its frame size");
  if (c.payloads.size() != size_t(m.prob().scales()) + 1)
    throw FormatError("container holds " + std::to_string(c.payloads.size()) +
                      " payloads but the model expects " +
                      std::to_string(m.prob().scales() + 1));

  NoGradGuard ng;
  const int h0 = hd.padded_h / 8, w0 = hd.padded_w / 8;

  std::vector<io::Bytes> payloads = c.payloads;
  if (c.top_deflated)
    payloads[0] = container::inflate_bytes(
        payloads[0], top_scale_elems(m.prob(), h0, w0));

  std::vector<Tensor> chain =
      msprob::decode_chain_payloads(m.prob(), payloads, h0, w0);
  return chain[0];
}

Tensor decode_frame(const net::CodecModel& m, const Tensor& f_prev,
                    const container::Container& c) {
  check_frame(f_prev, "previous frame");
  const container::Header& hd = c.header;
  if (int(f_prev.shape().h) != hd.orig_h || int(f_prev.shape().w) != hd.orig_w)
    throw FormatError("previous frame is " + f_prev.shape().str() +
                      " but the container was coded for " +
                      std::to_string(hd.orig_h) + "x" +
                      std::to_string(hd.orig_w));

  NoGradGuard ng;
  Tensor yhat = quant::dequantize_latent(decode_latent_symbols(m, c), hd.range);

  Tensor prev = pad_to_multiple8(f_prev);
  Tensor e_prev = m.embed(prev);
  Tensor ehat = m.decode_latent(yhat, e_prev);
  Tensor recon = m.reconstruct(ehat);
  if (m.config().use_attention)
    recon = m.blend(m.attention(ehat, e_prev), recon, prev);
  return op::crop_spatial(recon, hd.orig_h, hd.orig_w);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  const io::Bytes data = io::read_file(path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();

  auto resolve = [&](std::string p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };

  std::vector<ManifestEntry> out;
  std::string line;
  size_t lineno = 0;
  for (size_t i = 0; i <= data.size(); ++i) {
    if (i < data.size() && data[i] != '\n') {
      line.push_back(char(data[i]));
      continue;
    }
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) {
      const size_t tab = line.find('\t');
      if (tab == std::string::npos || tab == 0 || tab + 1 == line.size() ||
          line.find('\t', tab + 1) != std::string::npos)
        throw FormatError("manifest line " + std::to_string(lineno) +
                          " is not 'previous<TAB>current'");
      out.push_back(
          {resolve(line.substr(0, tab)), resolve(line.substr(tab + 1))});
    }
    line.clear();
  }
  return out;
}

}  // namespace ntc::pipeline
