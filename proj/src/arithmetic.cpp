#include "lowdim/arithmetic.hpp"

#include <cmath>
#include <stdexcept>

namespace lowdim {

FrequencyTable FrequencyTable::from_indices(std::span<const std::uint32_t> indices,
                                            std::size_t r) {
  FrequencyTable t;
  t.counts.assign(r, 0);
  for (std::uint32_t s : indices) {
    if (s >= r) throw std::invalid_argument("FrequencyTable: symbol out of range");
    ++t.counts[s];
  }
  return t;
}

std::uint64_t FrequencyTable::total() const {
  std::uint64_t n = 0;
  for (std::uint64_t c : counts) n += c;
  return n;
}

std::vector<std::uint64_t> FrequencyTable::cumulative() const {
  std::vector<std::uint64_t> cum(counts.size() + 1, 0);
  for (std::size_t i = 0; i < counts.size(); ++i) cum[i + 1] = cum[i] + counts[i];
  return cum;
}

std::size_t FrequencyTable::entry_bits() const {
  const std::uint64_t n = total();
  std::size_t bits = 0;
  while ((1ull << bits) < n + 1) ++bits;
  return bits;
}

void FrequencyTable::serialize(BitWriter& out) const {
  const std::size_t w = entry_bits();
  for (std::uint64_t c : counts) out.put_bits(c, w);
}

FrequencyTable FrequencyTable::deserialize(BitReader& in, std::size_t r, std::uint64_t total) {
  std::size_t w = 0;
  while ((1ull << w) < total + 1) ++w;
  FrequencyTable t;
  t.counts.resize(r);
  for (std::size_t i = 0; i < r; ++i) t.counts[i] = in.get_bits(w);
  if (t.total() != total)
    throw std::runtime_error("FrequencyTable: serialized counts sum to " +
                             std::to_string(t.total()) + ", expected " + std::to_string(total));
  return t;
}

double FrequencyTable::information_bits() const {
  const double n = static_cast<double>(total());
  double bits = 0.0;
  for (std::uint64_t c : counts)
    if (c > 0) bits += static_cast<double>(c) * std::log2(n / static_cast<double>(c));
  return bits;
}

namespace {

constexpr std::uint64_t kTop = 0xFFFFFFFFull;     // 32-bit register
constexpr std::uint64_t kHalf = 0x80000000ull;
constexpr std::uint64_t kQuarter = 0x40000000ull;
constexpr std::uint64_t kThreeQ = 0xC0000000ull;

struct Encoder {
  BitWriter& out;
  std::uint64_t low = 0, high = kTop;
  std::uint64_t pending = 0;

  void emit(bool bit) {
    out.put_bit(bit);
    while (pending > 0) {
      out.put_bit(!bit);
      --pending;
    }
  }

  void encode(std::uint64_t cum_lo, std::uint64_t cum_hi, std::uint64_t total) {
    const std::uint64_t range = high - low + 1;
    high = low + (range * cum_hi) / total - 1;
    low = low + (range * cum_lo) / total;
    for (;;) {
      if (high < kHalf) {
        emit(false);
      } else if (low >= kHalf) {
        emit(true);
        low -= kHalf;
        high -= kHalf;
      } else if (low >= kQuarter && high < kThreeQ) {
        ++pending;
        low -= kQuarter;
        high -= kQuarter;
      } else {
        break;
      }
      low <<= 1;
      high = (high << 1) | 1;
    }
  }

  void finish() {
    // two disambiguation bits pin the final interval
    ++pending;
    emit(low >= kQuarter);
  }
};

struct Decoder {
  BitReader& in;
  std::uint64_t low = 0, high = kTop, code = 0;

  explicit Decoder(BitReader& reader) : in(reader) {
    for (int i = 0; i < 32; ++i) code = (code << 1) | (in.get_bit_padded() ? 1u : 0u);
  }

  std::uint32_t decode(const std::vector<std::uint64_t>& cum) {
    const std::uint64_t total = cum.back();
    const std::uint64_t range = high - low + 1;
    const std::uint64_t value = ((code - low + 1) * total - 1) / range;
    // find symbol with cum[s] <= value < cum[s+1]
    std::size_t lo = 0, hi = cum.size() - 1;
    while (lo + 1 < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (cum[mid] <= value)
        lo = mid;
      else
        hi = mid;
    }
    const std::size_t sym = lo;
    if (cum[sym] == cum[sym + 1])
      throw std::runtime_error("arithmetic_decode: zero-count symbol (corrupt stream)");
    high = low + (range * cum[sym + 1]) / total - 1;
    low = low + (range * cum[sym]) / total;
    for (;;) {
      if (high < kHalf) {
        // nothing
      } else if (low >= kHalf) {
        low -= kHalf;
        high -= kHalf;
        code -= kHalf;
      } else if (low >= kQuarter && high < kThreeQ) {
        low -= kQuarter;
        high -= kQuarter;
        code -= kQuarter;
      } else {
        break;
      }
      low <<= 1;
      high = (high << 1) | 1;
      code = (code << 1) | (in.get_bit_padded() ? 1u : 0u);
    }
    return static_cast<std::uint32_t>(sym);
  }
};

}  // namespace

void arithmetic_encode(std::span<const std::uint32_t> indices, const FrequencyTable& freq,
                       BitWriter& out) {
  const std::uint64_t total = freq.total();
  if (total == 0) {
    if (!indices.empty()) throw std::invalid_argument("arithmetic_encode: empty model");
    return;
  }
  if (total >= (1ull << 30))
    throw std::invalid_argument("arithmetic_encode: total count too large for 32-bit coder");
  const auto cum = freq.cumulative();
  Encoder enc{out};
  for (std::uint32_t s : indices) {
    if (s >= freq.symbol_count() || freq.counts[s] == 0)
      throw std::invalid_argument("arithmetic_encode: symbol inconsistent with model");
    enc.encode(cum[s], cum[s + 1], total);
  }
  enc.finish();
}

std::vector<std::uint32_t> arithmetic_decode(BitReader& in, const FrequencyTable& freq,
                                             std::size_t count) {
  std::vector<std::uint32_t> out;
  out.reserve(count);
  if (count == 0) return out;
  const std::uint64_t total = freq.total();
  if (total == 0) throw std::runtime_error("arithmetic_decode: empty model");
  const auto cum = freq.cumulative();
  Decoder dec(in);
  for (std::size_t i = 0; i < count; ++i) out.push_back(dec.decode(cum));
  return out;
}

}  // namespace lowdim
