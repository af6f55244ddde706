#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace lowdim {

// Append-only bit buffer, MSB-first within each byte.
class BitWriter {
 public:
  void put_bit(bool b) {
    const std::size_t byte = nbits_ / 8;
    if (byte == bytes_.size()) bytes_.push_back(0);
    if (b) bytes_[byte] |= static_cast<std::uint8_t>(0x80u >> (nbits_ % 8));
    ++nbits_;
  }

  // width may be 0 (writes nothing); value must fit.
  void put_bits(std::uint64_t value, std::size_t width) {
    if (width > 64) throw std::invalid_argument("BitWriter: width > 64");
    if (width < 64 && value >> width)
      throw std::invalid_argument("BitWriter: value does not fit in " + std::to_string(width) +
                                  " bits");
    for (std::size_t i = width; i-- > 0;) put_bit((value >> i) & 1u);
  }

  void append(const BitWriter& other) {
    for (std::size_t i = 0; i < other.nbits_; ++i)
      put_bit(other.bytes_[i / 8] & (0x80u >> (i % 8)));
  }

  std::size_t bit_count() const { return nbits_; }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t nbits_ = 0;
};

class BitReader {
 public:
  BitReader(const std::vector<std::uint8_t>& bytes, std::size_t nbits)
      : bytes_(bytes), nbits_(nbits) {}

  bool get_bit() {
    if (pos_ >= nbits_) throw std::runtime_error("BitReader: read past end of stream");
    const bool b = bytes_[pos_ / 8] & (0x80u >> (pos_ % 8));
    ++pos_;
    return b;
  }

  // Reads past-the-end return 0 bits: the arithmetic decoder's register may
  // legitimately look a few bits beyond the final codeword.
  bool get_bit_padded() {
    if (pos_ >= nbits_) {
      ++pos_;
      return false;
    }
    return get_bit();
  }

  std::uint64_t get_bits(std::size_t width) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) v = (v << 1) | (get_bit() ? 1u : 0u);
    return v;
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return pos_ >= nbits_ ? 0 : nbits_ - pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t nbits_;
  std::size_t pos_ = 0;
};

}  // namespace lowdim
