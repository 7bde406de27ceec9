#include "ntc/serialize.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>

#include "ntc/tensor.hpp"

namespace ntc::io {

void ByteWriter::f32(float v) { u32(std::bit_cast<uint32_t>(v)); }

void ByteWriter::raw(const void* p, size_t n) {
  const auto* b = static_cast<const uint8_t*>(p);
  buf_.insert(buf_.end(), b, b + n);
}

uint8_t ByteReader::u8() {
  if (remaining() < 1) throw FormatError("truncated stream: need 1 byte");
  return data_[pos_++];
}

uint16_t ByteReader::u16() {
  if (remaining() < 2) throw FormatError("truncated stream: need 2 bytes");
  const uint16_t v = uint16_t(data_[pos_]) | uint16_t(data_[pos_ + 1]) << 8;
  pos_ += 2;
  return v;
}

uint32_t ByteReader::u32() {
  if (remaining() < 4) throw FormatError("truncated stream: need 4 bytes");
  const uint32_t v = uint32_t(data_[pos_]) | uint32_t(data_[pos_ + 1]) << 8 |
                     uint32_t(data_[pos_ + 2]) << 16 |
                     uint32_t(data_[pos_ + 3]) << 24;
  pos_ += 4;
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

std::span<const uint8_t> ByteReader::raw(size_t n) {
  if (remaining() < n)
    throw FormatError("truncated stream: need " + std::to_string(n) +
                      " bytes, have " + std::to_string(remaining()));
  auto s = data_.subspan(pos_, n);
  pos_ += n;
  return s;
}

Bytes read_file(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open " + path + " for reading");
  std::fseek(f, 0, SEEK_END);
  const long size = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  Bytes data(size > 0 ? size_t(size) : 0);
  const size_t got = size > 0 ? std::fread(data.data(), 1, data.size(), f) : 0;
  std::fclose(f);
  if (got != data.size()) throw IoError("short read from " + path);
  return data;
}

void write_file_atomic(const std::string& path,
                       std::span<const uint8_t> data) {
  const std::string tmp = path + ".tmp";
  std::FILE* f = std::fopen(tmp.c_str(), "wb");
  if (!f) throw IoError("cannot open " + tmp + " for writing");
  const size_t put =
      data.empty() ? 0 : std::fwrite(data.data(), 1, data.size(), f);
  const bool flushed = std::fflush(f) == 0;
  std::fclose(f);
  if (put != data.size() || !flushed) {
    std::remove(tmp.c_str());
    throw IoError("short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::remove(tmp.c_str());
    throw IoError("cannot rename " + tmp + " to " + path + ": " +
                  ec.message());
  }
}

}  // namespace ntc::io
