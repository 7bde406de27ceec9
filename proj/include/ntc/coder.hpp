// Binary arithmetic coder (32-bit registers, 16-bit frequency precision)
// with carry handling via pending bits, plus largest-remainder frequency
// quantization for 256-symbol alphabets.
//
// Encoder and decoder walk identical integer state, so a stream decodes to
// exactly the symbols that went in. The decoder tolerates reading a bounded
// number of bits past the end of the buffer (its registers look ahead); any
// more than that means the stream was truncated and raises VerifyError.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ntc/serialize.hpp"
#include "ntc/tensor.hpp"

namespace ntc::coder {

class BitWriter {
 public:
  void put(int bit) {
    cur_ = uint8_t((cur_ << 1) | (bit & 1));
    if (++nbits_ == 8) {
      buf_.push_back(cur_);
      cur_ = 0;
      nbits_ = 0;
    }
  }
  // pads the final partial byte with zeros
  io::Bytes finish() {
    while (nbits_ != 0) put(0);
    return std::move(buf_);
  }
  size_t bits_written() const { return buf_.size() * 8 + size_t(nbits_); }

 private:
  io::Bytes buf_;
  uint8_t cur_ = 0;
  int nbits_ = 0;
};

class BitReader {
 public:
  explicit BitReader(std::span<const uint8_t> data) : data_(data) {}
  int get() {
    if (pos_ < data_.size() * 8) {
      const int bit = (data_[pos_ >> 3] >> (7 - (pos_ & 7))) & 1;
      ++pos_;
      return bit;
    }
    if (++past_end_ > kPastEndSlack)
      throw VerifyError("bitstream truncated: decoder ran past the end");
    return 0;
  }

 private:
  static constexpr size_t kPastEndSlack = 64;
  std::span<const uint8_t> data_;
  size_t pos_ = 0;
  size_t past_end_ = 0;
};

class RangeEncoder {
 public:
  // Narrow the interval to [cum_lo, cum_hi) / total. Requires
  // cum_lo < cum_hi <= total <= 2^16.
  void encode(uint32_t cum_lo, uint32_t cum_hi, uint32_t total);
  io::Bytes finish();

 private:
  void emit(int bit);
  uint32_t low_ = 0;
  uint32_t high_ = 0xFFFFFFFFu;
  uint64_t pending_ = 0;
  BitWriter bits_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const uint8_t> data);
  // Where the next symbol's cumulative range must fall, in [0, total).
  uint32_t decode_target(uint32_t total) const;
  // Mirror of RangeEncoder::encode for the symbol just identified.
  void consume(uint32_t cum_lo, uint32_t cum_hi, uint32_t total);

 private:
  BitReader bits_;
  uint32_t low_ = 0;
  uint32_t high_ = 0xFFFFFFFFu;
  uint32_t value_ = 0;
};

// Integer frequency table over 256 symbols: every entry >= 1, sum = 2^16.
struct FreqTable {
  std::vector<uint32_t> freq;  // 256 entries
  std::vector<uint32_t> cum;   // 257 prefix sums, cum[256] == 65536
};

// Largest-remainder quantization of a 256-bin PMF: f_i = 1 + floor(p_i * B)
// with B = 2^16 - 256, then the leftover counts go to the largest fractional
// parts (ties to the lower symbol). Need not be normalized on input.
FreqTable quantize_freqs(std::span<const double> pmf);

void encode_symbol(RangeEncoder& enc, const FreqTable& t, int sym);
int decode_symbol(RangeDecoder& dec, const FreqTable& t);

}  // namespace ntc::coder
