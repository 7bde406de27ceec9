#include "ntc/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include "ntc/nn.hpp"
#include "ntc/ppm.hpp"
#include "ntc/serialize.hpp"

namespace ntc::synth {

namespace {

// Coarse random grid sampled bilinearly with clamped coordinates.
struct TextureGrid {
  int gh = 0, gw = 0;
  std::vector<float> cells;  // (3, gh, gw)

  float sample(int c, float fy, float fx) const {
    fy = std::clamp(fy, 0.f, float(gh - 1));
    fx = std::clamp(fx, 0.f, float(gw - 1));
    const int iy = std::min(int(fy), gh - 2);
    const int ix = std::min(int(fx), gw - 2);
    const float ay = fy - float(iy), ax = fx - float(ix);
    const float* p = &cells[size_t((c * gh + iy) * gw + ix)];
    const float top = p[0] * (1.f - ax) + p[1] * ax;
    const float bot = p[gw] * (1.f - ax) + p[gw + 1] * ax;
    return top * (1.f - ay) + bot * ay;
  }
};

}  // namespace

Pair make_pair(std::mt19937& rng, int h, int w, int max_shift) {
  if (h < 1 || w < 1 || max_shift < 0)
    throw ShapeError("synthetic pair needs positive dims and shift >= 0");

  TextureGrid g;
  g.gh = h / 8 + 3;
  g.gw = w / 8 + 3;
  g.cells.resize(size_t(3) * size_t(g.gh) * size_t(g.gw));
  for (auto& c : g.cells) c = nn::uniform01(rng);

  auto draw_shift = [&]() {
    const int mag =
        std::min(int(nn::uniform01(rng) * float(max_shift + 1)), max_shift);
    return nn::uniform01(rng) < 0.5f ? -mag : mag;
  };
  Pair out;
  out.dy = draw_shift();
  out.dx = draw_shift();

  Tensor prev(Shape{1, 3, h, w});
  Tensor cur(Shape{1, 3, h, w});
  auto pv = prev.values();
  auto cv = cur.values();
  constexpr float kScale = 0.125f;  // texture cells are 8 px wide
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const size_t i = size_t((c * h + y) * w + x);
        pv[i] = g.sample(c, float(y) * kScale, float(x) * kScale);
        cv[i] = g.sample(c, float(y - out.dy) * kScale,
                         float(x - out.dx) * kScale);
      }
  out.prev = prev;
  out.cur = cur;
  return out;
}

std::string write_dataset(const std::string& dir, int count, uint32_t seed,
                          int h, int w, int max_shift) {
  std::filesystem::create_directories(dir);
  std::mt19937 rng(seed);
  std::string manifest;
  for (int i = 0; i < count; ++i) {
    Pair p = make_pair(rng, h, w, max_shift);
    char base[32];
    std::snprintf(base, sizeof base, "pair%04d", i);
    const std::string prev_name = std::string(base) + "_prev.ppm";
    const std::string cur_name = std::string(base) + "_cur.ppm";
    ppm::write(dir + "/" + prev_name, p.prev);
    ppm::write(dir + "/" + cur_name, p.cur);
    manifest += prev_name + "\t" + cur_name + "\n";
  }
  const std::string path = dir + "/manifest.tsv";
  io::write_file_atomic(
      path, std::span(reinterpret_cast<const uint8_t*>(manifest.data()),
                      manifest.size()));
  return path;
}

}  // namespace ntc::synth
