#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace lowdim {

// IEEE 754 half-precision conversion, round to nearest even.
std::uint16_t float_to_half_bits(float f);
float half_to_float(std::uint16_t h);
// Nearest half-precision value as a double; codebook centers live on this grid.
double snap_to_half(double x);

// Ordered scalar quantization centers, all exactly representable in 16-bit
// floating point.
class Codebook {
 public:
  enum class Kind { global, local, single };

  Codebook() = default;
  // Sorts, snaps to half precision, and drops duplicates produced by the
  // snapping.  Throws on empty input or more than 256 entries.
  Codebook(std::vector<double> centers, Kind kind);

  const std::vector<double>& centers() const { return centers_; }
  std::vector<std::uint16_t> half_bits() const;
  std::size_t size() const { return centers_.size(); }
  Kind kind() const { return kind_; }

  // Index of the nearest center; exact midpoints take the lower index.
  std::size_t nearest(double x) const;
  double snap(double x) const { return centers_[nearest(x)]; }

  static Codebook from_half_bits(const std::vector<std::uint16_t>& bits, Kind kind);

 private:
  std::vector<double> centers_;
  Kind kind_ = Kind::single;
};

// Lloyd's algorithm on scalars: best of `restarts` seeded initializations by
// within-cluster SSE, centers snapped to half precision at the end.  r is
// reduced to the number of distinct values when it exceeds it.
Codebook kmeans_1d(std::span<const double> values, std::size_t r, std::size_t restarts,
                   Codebook::Kind kind, std::uint64_t seed);

// Index stream plus snapped values for a coefficient vector.
struct QuantizedVector {
  std::vector<std::uint32_t> indices;
  std::vector<double> values;
};

QuantizedVector quantize(std::span<const double> coefficients, const Codebook& codebook);

}  // namespace lowdim
