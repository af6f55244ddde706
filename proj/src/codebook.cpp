#include "lowdim/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <set>
#include <stdexcept>

#include "lowdim/rng.hpp"

namespace lowdim {

std::uint16_t float_to_half_bits(float f) {
  std::uint32_t x;
  std::memcpy(&x, &f, 4);
  const std::uint32_t sign = (x >> 16) & 0x8000u;
  const std::int32_t exp = static_cast<std::int32_t>((x >> 23) & 0xFF) - 127 + 15;
  std::uint32_t mant = x & 0x7FFFFFu;

  if (((x >> 23) & 0xFF) == 0xFF)  // inf / nan
    return static_cast<std::uint16_t>(sign | 0x7C00u | (mant ? 0x200u : 0u));
  if (exp >= 31)  // overflow -> inf
    return static_cast<std::uint16_t>(sign | 0x7C00u);
  if (exp <= 0) {
    if (exp < -10) return static_cast<std::uint16_t>(sign);  // underflow -> signed zero
    // subnormal: shift in the implicit bit, round to nearest even
    mant |= 0x800000u;
    const int shift = 14 - exp;
    const std::uint32_t half = 1u << (shift - 1);
    std::uint32_t out = mant >> shift;
    const std::uint32_t rem = mant & ((1u << shift) - 1);
    if (rem > half || (rem == half && (out & 1u))) ++out;
    return static_cast<std::uint16_t>(sign | out);
  }
  // normal: round the 23-bit mantissa to 10 bits, nearest even
  std::uint32_t out = (static_cast<std::uint32_t>(exp) << 10) | (mant >> 13);
  const std::uint32_t rem = mant & 0x1FFFu;
  if (rem > 0x1000u || (rem == 0x1000u && (out & 1u))) ++out;  // may carry into exp: still valid
  return static_cast<std::uint16_t>(sign | out);
}

float half_to_float(std::uint16_t h) {
  const std::uint32_t sign = (static_cast<std::uint32_t>(h) & 0x8000u) << 16;
  std::uint32_t exp = (h >> 10) & 0x1Fu;
  std::uint32_t mant = h & 0x3FFu;
  std::uint32_t out;
  if (exp == 0) {
    if (mant == 0) {
      out = sign;
    } else {
      // subnormal: normalize
      int e = -1;
      std::uint32_t m = mant;
      while ((m & 0x400u) == 0) {
        m <<= 1;
        ++e;
      }
      out = sign | ((127 - 15 - e) << 23) | ((m & 0x3FFu) << 13);
    }
  } else if (exp == 31) {
    out = sign | 0x7F800000u | (mant << 13);
  } else {
    out = sign | ((exp - 15 + 127) << 23) | (mant << 13);
  }
  float f;
  std::memcpy(&f, &out, 4);
  return f;
}

double snap_to_half(double x) {
  return static_cast<double>(half_to_float(float_to_half_bits(static_cast<float>(x))));
}

Codebook::Codebook(std::vector<double> centers, Kind kind) : kind_(kind) {
  if (centers.empty()) throw std::invalid_argument("Codebook: no centers");
  for (double& c : centers) c = snap_to_half(c);
  std::sort(centers.begin(), centers.end());
  centers.erase(std::unique(centers.begin(), centers.end()), centers.end());
  if (centers.size() > 256) throw std::invalid_argument("Codebook: more than 256 centers");
  for (double c : centers)
    if (!std::isfinite(c)) throw std::invalid_argument("Codebook: non-finite center");
  centers_ = std::move(centers);
}

std::vector<std::uint16_t> Codebook::half_bits() const {
  std::vector<std::uint16_t> bits;
  bits.reserve(centers_.size());
  for (double c : centers_) bits.push_back(float_to_half_bits(static_cast<float>(c)));
  return bits;
}

std::size_t Codebook::nearest(double x) const {
  // centers are sorted; the candidate pair brackets x
  const auto it = std::lower_bound(centers_.begin(), centers_.end(), x);
  if (it == centers_.begin()) return 0;
  if (it == centers_.end()) return centers_.size() - 1;
  const std::size_t hi = static_cast<std::size_t>(it - centers_.begin());
  const std::size_t lo = hi - 1;
  const double dlo = x - centers_[lo], dhi = centers_[hi] - x;
  return dhi < dlo ? hi : lo;  // ties go to the lower index
}

Codebook Codebook::from_half_bits(const std::vector<std::uint16_t>& bits, Kind kind) {
  std::vector<double> centers;
  centers.reserve(bits.size());
  for (std::uint16_t b : bits) centers.push_back(static_cast<double>(half_to_float(b)));
  return Codebook(std::move(centers), kind);
}

namespace {

double assign_and_sse(std::span<const double> values, const std::vector<double>& centers,
                      std::vector<std::size_t>& assignment) {
  double sse = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::size_t best = 0;
    double bd = std::abs(values[i] - centers[0]);
    for (std::size_t c = 1; c < centers.size(); ++c) {
      const double d = std::abs(values[i] - centers[c]);
      if (d < bd) {
        bd = d;
        best = c;
      }
    }
    assignment[i] = best;
    sse += bd * bd;
  }
  return sse;
}

}  // namespace

Codebook kmeans_1d(std::span<const double> values, std::size_t r, std::size_t restarts,
                   Codebook::Kind kind, std::uint64_t seed) {
  if (values.empty()) throw std::invalid_argument("kmeans_1d: empty input");
  if (r == 0) throw std::invalid_argument("kmeans_1d: r must be >= 1");
  for (double v : values)
    if (!std::isfinite(v)) throw std::invalid_argument("kmeans_1d: non-finite value");

  std::set<double> distinct(values.begin(), values.end());
  if (r > distinct.size()) r = distinct.size();  // reduced: fewer distinct values than centers
  if (restarts == 0) restarts = 1;

  std::vector<double> best_centers;
  double best_sse = std::numeric_limits<double>::infinity();
  const RngStream root(seed);

  const std::vector<double> pool(distinct.begin(), distinct.end());
  for (std::size_t attempt = 0; attempt < restarts; ++attempt) {
    RngStream rng = root.derive(attempt + 1);
    std::vector<double> centers(r);
    if (attempt == 0) {
      // quantile spread over the sorted distinct values
      for (std::size_t c = 0; c < r; ++c)
        centers[c] = pool[((2 * c + 1) * pool.size()) / (2 * r)];
    } else {
      // k-means++ seeding: squared-distance-weighted draws
      centers[0] = pool[rng.below(pool.size())];
      std::vector<double> d2(pool.size());
      for (std::size_t c = 1; c < r; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < pool.size(); ++i) {
          double best = std::numeric_limits<double>::infinity();
          for (std::size_t cc = 0; cc < c; ++cc)
            best = std::min(best, (pool[i] - centers[cc]) * (pool[i] - centers[cc]));
          d2[i] = best;
          total += best;
        }
        double pick = rng.uniform() * total;
        std::size_t chosen = pool.size() - 1;
        for (std::size_t i = 0; i < pool.size(); ++i) {
          pick -= d2[i];
          if (pick <= 0.0) {
            chosen = i;
            break;
          }
        }
        centers[c] = pool[chosen];
      }
    }
    std::sort(centers.begin(), centers.end());

    std::vector<std::size_t> assignment(values.size());
    std::vector<std::size_t> prev;
    for (int iter = 0; iter < 200; ++iter) {
      assign_and_sse(values, centers, assignment);
      if (assignment == prev) break;  // fixed point
      prev = assignment;
      std::vector<double> sum(centers.size(), 0.0);
      std::vector<std::size_t> cnt(centers.size(), 0);
      for (std::size_t i = 0; i < values.size(); ++i) {
        sum[assignment[i]] += values[i];
        ++cnt[assignment[i]];
      }
      for (std::size_t c = 0; c < centers.size(); ++c)
        if (cnt[c] > 0) centers[c] = sum[c] / static_cast<double>(cnt[c]);
    }
    const double sse = assign_and_sse(values, centers, assignment);
    if (sse < best_sse) {
      best_sse = sse;
      best_centers = centers;
    }
  }
  return Codebook(std::move(best_centers), kind);
}

QuantizedVector quantize(std::span<const double> coefficients, const Codebook& codebook) {
  if (codebook.size() == 0) throw std::invalid_argument("quantize: empty codebook");
  QuantizedVector q;
  q.indices.reserve(coefficients.size());
  q.values.reserve(coefficients.size());
  for (double c : coefficients) {
    const std::size_t idx = codebook.nearest(c);
    q.indices.push_back(static_cast<std::uint32_t>(idx));
    q.values.push_back(codebook.centers()[idx]);
  }
  return q;
}

}  // namespace lowdim
