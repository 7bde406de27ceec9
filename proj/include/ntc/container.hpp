// Bitstream container: one coded frame pair per file (".ntpf").
//
// Layout, all multi-byte fields little-endian:
//   magic "NTPF" | version u8 | flags u8 | orig h,w u16 | padded h,w u16 |
//   y_min f32 | y_max f32 | payload lengths u32 each | payload bytes
// flags bit0: the first payload (coarsest scale) is DEFLATE-compressed;
// flags bit1: degenerate quantizer (y_min == y_max stores a constant).
// Payloads are ordered coarsest scale first. The payload count is not part
// of the file; it comes from the model configuration (scales + 1), which a
// decoder already needs for the weights.
#pragma once

#include <span>
#include <string>
#include <vector>

#include "ntc/quant.hpp"
#include "ntc/serialize.hpp"

namespace ntc::container {

constexpr uint8_t kVersion = 1;

struct Header {
  int orig_h = 0, orig_w = 0;      // frame size before padding
  int padded_h = 0, padded_w = 0;  // multiples of 8 actually coded
  quant::Range range;              // latent quantizer range
};

struct Container {
  Header header;
  std::vector<io::Bytes> payloads;  // coarsest first; [0] as stored on disk
  bool top_deflated = false;        // payloads[0] needs inflate_bytes
};

// DEFLATE helpers for the raw coarsest-scale payload.
io::Bytes deflate_bytes(std::span<const uint8_t> raw);
// Throws FormatError unless the stream inflates to exactly expected_size.
io::Bytes inflate_bytes(std::span<const uint8_t> comp, size_t expected_size);

// Compresses the coarsest payload when that saves bytes (sets bit0).
io::Bytes serialize(const Container& c);
// Validates magic, version, flag consistency, geometry, and exact length
// bookkeeping; payload_count comes from the model (scales + 1).
Container parse(std::span<const uint8_t> bytes, int payload_count);

void write_file(const Container& c, const std::string& path);
Container read_file(const std::string& path, int payload_count);

}  // namespace ntc::container
