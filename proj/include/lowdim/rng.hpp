#pragma once

#include <cstdint>
#include <numbers>
#include <cmath>

#include "lowdim/tensor.hpp"

namespace lowdim {

// Counter-based generator: draw i of a stream is a pure function of
// (seed, i), via the splitmix64 finalizer over a keyed counter.  Identical
// seeds give bit-identical sequences everywhere, and projectors or
// initializations can be rebuilt from their seed alone -- nothing random is
// ever serialized.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed) {}

  // Stateless draw: does not advance the stream.
  std::uint64_t at(std::uint64_t index) const {
    std::uint64_t z = seed_ + 0x9E3779B97F4A7C15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    z ^= z >> 31;
    // second mixing round so nearby seeds decorrelate as well
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t next() { return at(counter_++); }

  // Uniform in (0,1): top 53 bits, offset by half an ulp so log() is safe.
  double uniform_at(std::uint64_t index) const {
    return (static_cast<double>(at(index) >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform() { return uniform_at(counter_++); }

  // Standard normal via Box-Muller; draw i consumes raw draws 2i and 2i+1,
  // so normal_at(i) is independent of how the stream was consumed before.
  double normal_at(std::uint64_t index) const {
    const double u1 = uniform_at(2 * index);
    const double u2 = uniform_at(2 * index + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal() { return normal_at(counter_++); }

  // Integer in [0, bound) without modulo bias worth caring about at our scale.
  std::uint64_t below(std::uint64_t bound) { return at(counter_++) % bound; }

  // Independent substream; label picks which one.
  RngStream derive(std::uint64_t label) const {
    return RngStream(at(0xD1B54A32D192ED03ull ^ (label * 0x8CB92BA72F3D8DD7ull)));
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

// I.i.d. standard normal matrix, entry (r,c) = normal_at(r*cols + c).
inline Tensor gaussian(const RngStream& rng, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) throw std::invalid_argument("gaussian: rows and cols must be >= 1");
  Tensor t({rows, cols});
  for (std::size_t i = 0; i < rows * cols; ++i) t[i] = rng.normal_at(i);
  return t;
}

// Deterministic Fisher-Yates permutation of {0,..,n-1}.
inline std::vector<std::size_t> random_permutation(RngStream& rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

}  // namespace lowdim
