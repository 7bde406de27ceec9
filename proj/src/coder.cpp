#include "ntc/coder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ntc::coder {

namespace {
constexpr uint32_t kHalf = 0x80000000u;
constexpr uint32_t kQuarter = 0x40000000u;
constexpr uint32_t kThreeQuarters = 0xC0000000u;
constexpr uint32_t kTotalFreq = 1u << 16;
constexpr int kSymbols = 256;

void check_interval(uint32_t cum_lo, uint32_t cum_hi, uint32_t total) {
  if (!(cum_lo < cum_hi && cum_hi <= total && total <= kTotalFreq))
    throw ShapeError("range coder: bad interval [" + std::to_string(cum_lo) +
                     "," + std::to_string(cum_hi) + ")/" +
                     std::to_string(total));
}
}  // namespace

void RangeEncoder::emit(int bit) {
  bits_.put(bit);
  for (; pending_ > 0; --pending_) bits_.put(!bit);
}

void RangeEncoder::encode(uint32_t cum_lo, uint32_t cum_hi, uint32_t total) {
  check_interval(cum_lo, cum_hi, total);
  const uint64_t range = uint64_t(high_) - low_ + 1;
  high_ = low_ + uint32_t(range * cum_hi / total) - 1;
  low_ = low_ + uint32_t(range * cum_lo / total);
  for (;;) {
    if (high_ < kHalf) {
      emit(0);
    } else if (low_ >= kHalf) {
      emit(1);
      low_ -= kHalf;
      high_ -= kHalf;
    } else if (low_ >= kQuarter && high_ < kThreeQuarters) {
      ++pending_;
      low_ -= kQuarter;
      high_ -= kQuarter;
    } else {
      break;
    }
    low_ <<= 1;
    high_ = (high_ << 1) | 1;
  }
}

io::Bytes RangeEncoder::finish() {
  // one more bit pins the interval; pending bits resolve the carry
  ++pending_;
  emit(low_ >= kQuarter ? 1 : 0);
  return bits_.finish();
}

RangeDecoder::RangeDecoder(std::span<const uint8_t> data) : bits_(data) {
  for (int i = 0; i < 32; ++i) value_ = (value_ << 1) | uint32_t(bits_.get());
}

uint32_t RangeDecoder::decode_target(uint32_t total) const {
  const uint64_t range = uint64_t(high_) - low_ + 1;
  return uint32_t(((uint64_t(value_) - low_ + 1) * total - 1) / range);
}

void RangeDecoder::consume(uint32_t cum_lo, uint32_t cum_hi, uint32_t total) {
  check_interval(cum_lo, cum_hi, total);
  const uint64_t range = uint64_t(high_) - low_ + 1;
  high_ = low_ + uint32_t(range * cum_hi / total) - 1;
  low_ = low_ + uint32_t(range * cum_lo / total);
  for (;;) {
    if (high_ < kHalf) {
      // nothing to subtract
    } else if (low_ >= kHalf) {
      value_ -= kHalf;
      low_ -= kHalf;
      high_ -= kHalf;
    } else if (low_ >= kQuarter && high_ < kThreeQuarters) {
      value_ -= kQuarter;
      low_ -= kQuarter;
      high_ -= kQuarter;
    } else {
      break;
    }
    low_ <<= 1;
    high_ = (high_ << 1) | 1;
    value_ = (value_ << 1) | uint32_t(bits_.get());
  }
}

FreqTable quantize_freqs(std::span<const double> pmf) {
  if (pmf.size() != kSymbols)
    throw ShapeError("quantize_freqs: expected 256 bins, got " +
                     std::to_string(pmf.size()));
  double sum = 0;
  for (double p : pmf) {
    if (!(p >= 0) || !std::isfinite(p))
      throw VerifyError("quantize_freqs: invalid probability");
    sum += p;
  }
  if (sum <= 0) throw VerifyError("quantize_freqs: zero-mass PMF");

  constexpr double kBudget = double(kTotalFreq - kSymbols);
  FreqTable t;
  t.freq.resize(kSymbols);
  std::vector<double> frac(kSymbols);
  int64_t assigned = 0;
  for (int i = 0; i < kSymbols; ++i) {
    const double target = pmf[size_t(i)] / sum * kBudget;
    const double fl = std::floor(target);
    t.freq[size_t(i)] = 1 + uint32_t(fl);
    frac[size_t(i)] = target - fl;
    assigned += t.freq[size_t(i)];
  }
  // hand out the remainder by largest fractional part, ties to lower index
  std::vector<int> order(kSymbols);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (frac[size_t(a)] != frac[size_t(b)])
      return frac[size_t(a)] > frac[size_t(b)];
    return a < b;
  });
  int64_t leftover = int64_t(kTotalFreq) - assigned;
  for (int i = 0; leftover > 0; i = (i + 1) % kSymbols, --leftover)
    ++t.freq[size_t(order[size_t(i)])];
  // floating-point drift could only overshoot by a hair; take it back from
  // the largest entries, never dropping anyone below 1
  for (int i = kSymbols - 1; leftover < 0; --i) {
    const int j = order[size_t((i % kSymbols + kSymbols) % kSymbols)];
    if (t.freq[size_t(j)] > 1) {
      --t.freq[size_t(j)];
      ++leftover;
    }
    if (i <= -8 * kSymbols)
      throw VerifyError("quantize_freqs: could not settle the table");
  }

  t.cum.resize(kSymbols + 1);
  t.cum[0] = 0;
  for (int i = 0; i < kSymbols; ++i)
    t.cum[size_t(i) + 1] = t.cum[size_t(i)] + t.freq[size_t(i)];
  if (t.cum.back() != kTotalFreq)
    throw VerifyError("quantize_freqs: table does not sum to 2^16");
  return t;
}

void encode_symbol(RangeEncoder& enc, const FreqTable& t, int sym) {
  enc.encode(t.cum[size_t(sym)], t.cum[size_t(sym) + 1], t.cum.back());
}

int decode_symbol(RangeDecoder& dec, const FreqTable& t) {
  const uint32_t target = dec.decode_target(t.cum.back());
  const auto it = std::upper_bound(t.cum.begin(), t.cum.end(), target);
  const int sym = int(it - t.cum.begin()) - 1;
  dec.consume(t.cum[size_t(sym)], t.cum[size_t(sym) + 1], t.cum.back());
  return sym;
}

}  // namespace ntc::coder
