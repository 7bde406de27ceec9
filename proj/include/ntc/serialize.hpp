// Little-endian byte-level serialization and atomic file I/O.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ntc::io {

using Bytes = std::vector<uint8_t>;

class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u16(uint16_t v) {
    buf_.push_back(uint8_t(v));
    buf_.push_back(uint8_t(v >> 8));
  }
  void u32(uint32_t v) {
    buf_.push_back(uint8_t(v));
    buf_.push_back(uint8_t(v >> 8));
    buf_.push_back(uint8_t(v >> 16));
    buf_.push_back(uint8_t(v >> 24));
  }
  void f32(float v);
  void raw(const void* p, size_t n);
  void str(std::string_view s) { raw(s.data(), s.size()); }

  const Bytes& bytes() const { return buf_; }
  Bytes take() { return std::move(buf_); }
  size_t size() const { return buf_.size(); }

 private:
  Bytes buf_;
};

// Throws FormatError when a read runs past the end.
class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> data) : data_(data) {}

  uint8_t u8();
  uint16_t u16();
  uint32_t u32();
  float f32();
  std::span<const uint8_t> raw(size_t n);

  size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::span<const uint8_t> data_;
  size_t pos_ = 0;
};

// Whole-file helpers; write goes through a temp file plus rename so a crash
// never leaves a half-written artifact at the destination.
Bytes read_file(const std::string& path);
void write_file_atomic(const std::string& path, std::span<const uint8_t> data);

}  // namespace ntc::io
