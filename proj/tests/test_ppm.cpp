// Pixmap I/O and the synthetic translating-texture dataset.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "ntc/ppm.hpp"
#include "ntc/serialize.hpp"
#include "ntc/synth.hpp"
#include "test_util.hpp"

using namespace ntc;

namespace {

void write_raw(const std::string& path, const std::string& text) {
  io::write_file_atomic(
      path, std::span(reinterpret_cast<const uint8_t*>(text.data()),
                      text.size()));
}

}  // namespace

TEST_CASE("every byte level survives the float round trip") {
  // 256 levels laid out across one 16x16 channel plane, gray pixels.
  std::vector<float> v(3 * 256);
  for (int i = 0; i < 256; ++i)
    for (int c = 0; c < 3; ++c) v[size_t(c * 256 + i)] = float(i) / 255.f;
  Tensor frame(Shape{1, 3, 16, 16}, v);

  const std::string path = "ppm_levels.ppm";
  ppm::write(path, frame);
  Tensor back = ppm::read(path);
  REQUIRE(back.shape() == frame.shape());
  for (size_t i = 0; i < v.size(); ++i)
    CHECK(back.values()[i] == frame.values()[i]);
  std::remove(path.c_str());
}

TEST_CASE("writer clamps out-of-range values") {
  std::vector<float> v(12, 0.f);
  v[0] = -0.25f;
  v[1] = 1.75f;
  v[2] = 0.5f;
  Tensor frame(Shape{1, 3, 2, 2}, v);
  const std::string path = "ppm_clamp.ppm";
  ppm::write(path, frame);
  io::Bytes data = io::read_file(path);
  // Header "P6\n2 2\n255\n" is 11 bytes; pixels are interleaved RGB.
  REQUIRE(data.size() == 11 + 12);
  CHECK(data[11] == 0);    // clamped low
  CHECK(data[14] == 255);  // clamped high (pixel 1, red)
  CHECK(data[17] == 128);  // 0.5 rounds half away from zero
  std::remove(path.c_str());
}

TEST_CASE("header parsing accepts comments and flexible whitespace") {
  const std::string path = "ppm_hdr.ppm";
  write_raw(path, "P6 # comment\n# another\n  2\t1 \r\n255\n" +
                      std::string("abcdef"));
  Tensor t = ppm::read(path);
  CHECK(t.shape() == Shape{1, 3, 1, 2});
  CHECK(t.values()[0] == doctest::Approx(float('a') / 255.f));
  std::remove(path.c_str());
}

TEST_CASE("malformed pixmaps are rejected") {
  const std::string path = "ppm_bad.ppm";

  write_raw(path, "P5\n2 2\n255\n" + std::string(12, 'x'));
  CHECK_THROWS_AS(ppm::read(path), FormatError);

  write_raw(path, "P6\n2 2\n65535\n" + std::string(24, 'x'));
  CHECK_THROWS_AS(ppm::read(path), FormatError);

  write_raw(path, "P6\n2 2\n255\n" + std::string(11, 'x'));  // short raster
  CHECK_THROWS_AS(ppm::read(path), FormatError);

  write_raw(path, "P6\n2 2\n255\n" + std::string(13, 'x'));  // long raster
  CHECK_THROWS_AS(ppm::read(path), FormatError);

  write_raw(path, "P6\n0 2\n255\n");
  CHECK_THROWS_AS(ppm::read(path), FormatError);

  std::remove(path.c_str());
  CHECK_THROWS_AS(ppm::read("ppm_missing.ppm"), IoError);

  Tensor gray(Shape{1, 1, 2, 2});
  CHECK_THROWS_AS(ppm::write("ppm_gray.ppm", gray), ShapeError);
}

TEST_CASE("synthetic pairs are deterministic and in range") {
  std::mt19937 a(7), b(7), c(8);
  synth::Pair p1 = synth::make_pair(a, 24, 32);
  synth::Pair p2 = synth::make_pair(b, 24, 32);
  synth::Pair p3 = synth::make_pair(c, 24, 32);

  CHECK(p1.prev.shape() == Shape{1, 3, 24, 32});
  auto eq = [](const Tensor& x, const Tensor& y) {
    for (int64_t i = 0; i < x.numel(); ++i)
      if (x.values()[i] != y.values()[i]) return false;
    return true;
  };
  CHECK(eq(p1.prev, p2.prev));
  CHECK(eq(p1.cur, p2.cur));
  CHECK_FALSE(eq(p1.prev, p3.prev));
  for (float v : p1.prev.values()) CHECK((v >= 0.f && v <= 1.f));
  CHECK(std::abs(p1.dy) <= 4);
  CHECK(std::abs(p1.dx) <= 4);
}

TEST_CASE("current frame is the previous one translated") {
  std::mt19937 rng(11);
  // Find a pair with a nonzero shift so the test is meaningful.
  synth::Pair p = synth::make_pair(rng, 32, 32);
  while (p.dy == 0 && p.dx == 0) p = synth::make_pair(rng, 32, 32);

  const int h = 32, w = 32;
  auto at = [&](const Tensor& t, int c, int y, int x) {
    return t.values()[size_t((c * h + y) * w + x)];
  };
  for (int c = 0; c < 3; ++c)
    for (int y = std::max(0, p.dy); y < h + std::min(0, p.dy); ++y)
      for (int x = std::max(0, p.dx); x < w + std::min(0, p.dx); ++x)
        CHECK(at(p.cur, c, y, x) == at(p.prev, c, y - p.dy, x - p.dx));

  // Zero max shift collapses to identical frames.
  synth::Pair still = synth::make_pair(rng, 16, 16, 0);
  for (int64_t i = 0; i < still.prev.numel(); ++i)
    CHECK(still.prev.values()[i] == still.cur.values()[i]);
}

TEST_CASE("dataset writer emits readable pairs and a manifest") {
  const std::string dir = "synth_ds_test";
  const std::string manifest = synth::write_dataset(dir, 3, 42, 16, 24);

  io::Bytes m = io::read_file(manifest);
  std::string text(m.begin(), m.end());
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
  CHECK(text.find("pair0000_prev.ppm\tpair0000_cur.ppm\n") !=
        std::string::npos);

  Tensor prev = ppm::read(dir + "/pair0002_prev.ppm");
  Tensor cur = ppm::read(dir + "/pair0002_cur.ppm");
  CHECK(prev.shape() == Shape{1, 3, 16, 24});
  CHECK(cur.shape() == Shape{1, 3, 16, 24});

  // Same seed reproduces the dataset bit for bit.
  const std::string dir2 = "synth_ds_test2";
  synth::write_dataset(dir2, 3, 42, 16, 24);
  CHECK(io::read_file(dir + "/pair0001_cur.ppm") ==
        io::read_file(dir2 + "/pair0001_cur.ppm"));

  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(dir2);
}
