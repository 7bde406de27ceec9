#include "ntc/ppm.hpp"

#include <algorithm>
#include <cmath>

#include "ntc/serialize.hpp"

namespace ntc::ppm {

namespace {

// Whitespace-and-comment aware header token scanner.
struct HeaderScanner {
  std::span<const uint8_t> data;
  size_t pos = 0;

  static bool is_space(uint8_t c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n';
  }

  void skip_separators() {
    while (pos < data.size()) {
      if (is_space(data[pos])) {
        ++pos;
      } else if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  }

  int number() {
    skip_separators();
    if (pos >= data.size() || data[pos] < '0' || data[pos] > '9')
      throw FormatError("pixmap header: expected a number");
    long v = 0;
    while (pos < data.size() && data[pos] >= '0' && data[pos] <= '9') {
      v = v * 10 + (data[pos] - '0');
      if (v > 1 << 20) throw FormatError("pixmap header: number out of range");
      ++pos;
    }
    return int(v);
  }
};

}  // namespace

Tensor read(const std::string& path) {
  const io::Bytes data = io::read_file(path);
  HeaderScanner s{data};
  if (data.size() < 2 || data[0] != 'P' || data[1] != '6')
    throw FormatError("not a binary pixmap (expected P6): " + path);
  s.pos = 2;
  const int w = s.number();
  const int h = s.number();
  const int maxval = s.number();
  if (w <= 0 || h <= 0)
    throw FormatError("pixmap has empty dimensions: " + path);
  if (maxval != 255)
    throw FormatError("pixmap max value must be 255, got " +
                      std::to_string(maxval) + ": " + path);
  if (s.pos >= data.size() || !HeaderScanner::is_space(data[s.pos]))
    throw FormatError("pixmap header not terminated by whitespace: " + path);
  ++s.pos;  // exactly one separator before the raster

  const size_t need = size_t(w) * size_t(h) * 3;
  if (data.size() - s.pos != need)
    throw FormatError("pixmap raster holds " +
                      std::to_string(data.size() - s.pos) + " bytes, needs " +
                      std::to_string(need) + ": " + path);

  Tensor out(Shape{1, 3, h, w});
  auto v = out.values();
  const int64_t plane = int64_t(h) * w;
  for (int64_t i = 0; i < plane; ++i)
    for (int64_t c = 0; c < 3; ++c)
      v[size_t(c * plane + i)] = float(data[s.pos + size_t(i * 3 + c)]) / 255.f;
  return out;
}

void write(const std::string& path, const Tensor& frame) {
  const Shape s = frame.shape();
  if (s.n != 1 || s.c != 3)
    throw ShapeError("pixmap write needs a (1, 3, h, w) frame, got " +
                     s.str());
  io::ByteWriter w;
  w.str("P6\n" + std::to_string(s.w) + " " + std::to_string(s.h) + "\n255\n");
  auto v = frame.values();
  const int64_t plane = s.h * s.w;
  for (int64_t i = 0; i < plane; ++i)
    for (int64_t c = 0; c < 3; ++c) {
      const float x = std::clamp(v[size_t(c * plane + i)], 0.f, 1.f);
      w.u8(uint8_t(std::lround(x * 255.f)));
    }
  io::write_file_atomic(path, w.take());
}

}  // namespace ntc::ppm
