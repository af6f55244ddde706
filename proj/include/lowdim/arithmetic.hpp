#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lowdim/bitstream.hpp"

namespace lowdim {

// Static per-symbol counts transmitted alongside each arithmetic stream.
// Serialized as r fixed-width integers of ceil(log2(N+1)) bits each, N being
// the total count — the layout behind the 90-bit figure for r=10, N=300.
struct FrequencyTable {
  std::vector<std::uint64_t> counts;

  static FrequencyTable from_indices(std::span<const std::uint32_t> indices, std::size_t r);

  std::uint64_t total() const;
  std::size_t symbol_count() const { return counts.size(); }
  std::vector<std::uint64_t> cumulative() const;  // size r+1

  // ceil(log2(N+1)), the fixed width of one serialized count.
  std::size_t entry_bits() const;
  std::size_t serialized_bits() const { return counts.size() * entry_bits(); }

  void serialize(BitWriter& out) const;
  // N and r are known from context (header dims); the entry width follows.
  static FrequencyTable deserialize(BitReader& in, std::size_t r, std::uint64_t total);

  // Shannon information content of a stream with these exact counts, in bits.
  double information_bits() const;
};

// Integer arithmetic coder (32-bit registers, carry handled by bit-stuffing).
// The static model is the transmitted frequency table; emitted length is at
// most ceil(information) + a small termination overhead, asserted at 16 bits
// in the tests.
void arithmetic_encode(std::span<const std::uint32_t> indices, const FrequencyTable& freq,
                       BitWriter& out);

// Decodes exactly `count` symbols.  Throws on a zero-count symbol or other
// coder desync (corruption).
std::vector<std::uint32_t> arithmetic_decode(BitReader& in, const FrequencyTable& freq,
                                             std::size_t count);

}  // namespace lowdim
