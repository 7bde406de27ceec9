#include "ntc/container.hpp"

#include <zlib.h>

#include <limits>

namespace ntc::container {

namespace {

constexpr uint8_t kFlagTopDeflated = 0x01;
constexpr uint8_t kFlagDegenerate = 0x02;

void check_header(const Header& h) {
  auto fits_u16 = [](int v) { return v > 0 && v <= 0xFFFF; };
  if (!fits_u16(h.orig_h) || !fits_u16(h.orig_w) || !fits_u16(h.padded_h) ||
      !fits_u16(h.padded_w))
    throw FormatError("container dimensions must be in [1, 65535]");
  if (h.padded_h < h.orig_h || h.padded_w < h.orig_w)
    throw FormatError("container padded size smaller than original size");
  if (h.padded_h % 8 != 0 || h.padded_w % 8 != 0)
    throw FormatError("container padded size must be divisible by 8");
}

}  // namespace

io::Bytes deflate_bytes(std::span<const uint8_t> raw) {
  uLongf cap = compressBound(uLong(raw.size()));
  io::Bytes out(cap);
  const int rc =
      compress2(out.data(), &cap, raw.data(), uLong(raw.size()), 9);
  if (rc != Z_OK) throw IoError("deflate failed with zlib code " +
                                std::to_string(rc));
  out.resize(cap);
  return out;
}

io::Bytes inflate_bytes(std::span<const uint8_t> comp, size_t expected_size) {
  io::Bytes out(expected_size);
  uLongf got = uLongf(expected_size);
  const int rc = uncompress(out.data(), &got, comp.data(), uLong(comp.size()));
  if (rc != Z_OK || got != expected_size)
    throw FormatError("compressed payload does not inflate to the expected " +
                      std::to_string(expected_size) + " bytes");
  return out;
}

io::Bytes serialize(const Container& c) {
  check_header(c.header);
  if (c.payloads.empty())
    throw FormatError("container needs at least one payload");
  if (c.top_deflated)
    throw FormatError("serialize expects the raw coarsest payload");

  io::Bytes top = c.payloads[0];
  uint8_t flags = 0;
  if (!top.empty()) {
    io::Bytes packed = deflate_bytes(top);
    if (packed.size() < top.size()) {
      top = std::move(packed);
      flags |= kFlagTopDeflated;
    }
  }
  if (c.header.range.degenerate()) flags |= kFlagDegenerate;

  io::ByteWriter w;
  w.str("NTPF");
  w.u8(kVersion);
  w.u8(flags);
  w.u16(uint16_t(c.header.orig_h));
  w.u16(uint16_t(c.header.orig_w));
  w.u16(uint16_t(c.header.padded_h));
  w.u16(uint16_t(c.header.padded_w));
  w.f32(c.header.range.y_min);
  w.f32(c.header.range.y_max);
  for (size_t i = 0; i < c.payloads.size(); ++i) {
    const io::Bytes& p = (i == 0) ? top : c.payloads[i];
    if (p.size() > std::numeric_limits<uint32_t>::max())
      throw FormatError("container payload exceeds the 32-bit length field");
    w.u32(uint32_t(p.size()));
  }
  w.raw(top.data(), top.size());
  for (size_t i = 1; i < c.payloads.size(); ++i)
    w.raw(c.payloads[i].data(), c.payloads[i].size());
  return w.take();
}

Container parse(std::span<const uint8_t> bytes, int payload_count) {
  if (payload_count < 1)
    throw FormatError("container payload count must be positive");
  io::ByteReader r(bytes);

  uint8_t magic[4];
  for (auto& m : magic) m = r.u8();
  if (magic[0] != 'N' || magic[1] != 'T' || magic[2] != 'P' ||
      magic[3] != 'F')
    throw FormatError("bad container magic (expected NTPF)");
  const uint8_t version = r.u8();
  if (version != kVersion)
    throw FormatError("unsupported container version " +
                      std::to_string(int(version)) + " (this build reads " +
                      std::to_string(int(kVersion)) + ")");
  const uint8_t flags = r.u8();
  if (flags & ~(kFlagTopDeflated | kFlagDegenerate))
    throw FormatError("container has unknown flag bits set");

  Container c;
  c.header.orig_h = r.u16();
  c.header.orig_w = r.u16();
  c.header.padded_h = r.u16();
  c.header.padded_w = r.u16();
  c.header.range.y_min = r.f32();
  c.header.range.y_max = r.f32();
  check_header(c.header);
  if (bool(flags & kFlagDegenerate) != c.header.range.degenerate())
    throw FormatError("container degenerate flag contradicts the range");

  std::vector<uint32_t> lengths(static_cast<size_t>(payload_count));
  for (auto& len : lengths) len = r.u32();
  for (uint32_t len : lengths) {
    std::span<const uint8_t> p = r.raw(len);
    c.payloads.emplace_back(p.begin(), p.end());
  }
  if (r.remaining() != 0)
    throw FormatError("container has " + std::to_string(r.remaining()) +
                      " trailing bytes");
  c.top_deflated = (flags & kFlagTopDeflated) != 0;
  return c;
}

void write_file(const Container& c, const std::string& path) {
  io::write_file_atomic(path, serialize(c));
}

Container read_file(const std::string& path, int payload_count) {
  const io::Bytes data = io::read_file(path);
  return parse(data, payload_count);
}

}  // namespace ntc::container
