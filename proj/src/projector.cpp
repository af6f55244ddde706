#include "lowdim/projector.hpp"

#include <cmath>
#include <stdexcept>

#include "lowdim/rng.hpp"

namespace lowdim {

namespace {

std::size_t isqrt_ceil(std::size_t n) {
  std::size_t r = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  while (r * r < n) ++r;
  while (r > 1 && (r - 1) * (r - 1) >= n) --r;
  return r;
}

}  // namespace

KroneckerProjector::KroneckerProjector(std::size_t ambient_dim, std::size_t coeff_dim,
                                       std::uint64_t seed)
    : ambient_(ambient_dim), coeff_(coeff_dim), seed_(seed) {
  if (ambient_ == 0 || coeff_ == 0)
    throw std::invalid_argument("KroneckerProjector: dimensions must be >= 1");
  d1_rows_ = isqrt_ceil(ambient_);
  d2_rows_ = (ambient_ + d1_rows_ - 1) / d1_rows_;
  d1_cols_ = isqrt_ceil(coeff_);
  d2_cols_ = (coeff_ + d1_cols_ - 1) / d1_cols_;
  scale_ = 1.0 / std::sqrt(static_cast<double>(ambient_));
  const RngStream root(seed_);
  q1_ = gaussian(root.derive(1), d1_rows_, d1_cols_);
  q2_ = gaussian(root.derive(2), d2_rows_, d2_cols_);
}

// Index convention of the Kronecker product: ambient row i = i1*D2 + i2,
// coefficient column j = j1*d2 + j2, entry Q1[i1,j1] * Q2[i2,j2].
std::vector<double> KroneckerProjector::apply(std::span<const double> w) const {
  if (w.size() != coeff_)
    throw std::invalid_argument("apply: coefficient length " + std::to_string(w.size()) +
                                " != " + std::to_string(coeff_));
  // W[j2, j1] = w[j1*d2 + j2], zero-padded beyond coeff_.
  Tensor wm({d2_cols_, d1_cols_});
  for (std::size_t j = 0; j < coeff_; ++j) wm(j % d2_cols_, j / d2_cols_) = w[j];

  // T = Q2 * W  (D2 x d1_cols)
  Tensor t({d2_rows_, d1_cols_});
  for (std::size_t i2 = 0; i2 < d2_rows_; ++i2)
    for (std::size_t j2 = 0; j2 < d2_cols_; ++j2) {
      const double q = q2_(i2, j2);
      if (q == 0.0) continue;
      for (std::size_t j1 = 0; j1 < d1_cols_; ++j1) t(i2, j1) += q * wm(j2, j1);
    }

  // theta[i1*D2 + i2] = sum_j1 Q1[i1,j1] * T[i2,j1], truncated to ambient_.
  std::vector<double> theta(ambient_, 0.0);
  for (std::size_t i1 = 0; i1 < d1_rows_; ++i1) {
    const std::size_t base = i1 * d2_rows_;
    if (base >= ambient_) break;
    const std::size_t lim = std::min(d2_rows_, ambient_ - base);
    for (std::size_t i2 = 0; i2 < lim; ++i2) {
      double acc = 0.0;
      for (std::size_t j1 = 0; j1 < d1_cols_; ++j1) acc += q1_(i1, j1) * t(i2, j1);
      theta[base + i2] = acc * scale_;
    }
  }
  return theta;
}

std::vector<double> KroneckerProjector::adjoint_apply(std::span<const double> g) const {
  if (g.size() != ambient_)
    throw std::invalid_argument("adjoint_apply: gradient length " + std::to_string(g.size()) +
                                " != " + std::to_string(ambient_));
  // G[i2, i1] = g[i1*D2 + i2], zero-padded beyond ambient_.
  Tensor gm({d2_rows_, d1_rows_});
  for (std::size_t i = 0; i < ambient_; ++i) gm(i % d2_rows_, i / d2_rows_) = g[i];

  // T = Q2^T * G  (d2_cols x D1)
  Tensor t({d2_cols_, d1_rows_});
  for (std::size_t j2 = 0; j2 < d2_cols_; ++j2)
    for (std::size_t i2 = 0; i2 < d2_rows_; ++i2) {
      const double q = q2_(i2, j2);
      if (q == 0.0) continue;
      for (std::size_t i1 = 0; i1 < d1_rows_; ++i1) t(j2, i1) += q * gm(i2, i1);
    }

  // u[j1*d2 + j2] = sum_i1 Q1[i1,j1] * T[j2,i1], truncated to coeff_.
  std::vector<double> u(coeff_, 0.0);
  for (std::size_t j = 0; j < coeff_; ++j) {
    const std::size_t j1 = j / d2_cols_, j2 = j % d2_cols_;
    double acc = 0.0;
    for (std::size_t i1 = 0; i1 < d1_rows_; ++i1) acc += q1_(i1, j1) * t(j2, i1);
    u[j] = acc * scale_;
  }
  return u;
}

SharedBasis::SharedBasis(std::size_t ambient_dim, std::size_t basis_size, std::size_t block_dim,
                         std::uint64_t seed)
    : projector(ambient_dim, basis_size * block_dim, seed), k(basis_size), l(block_dim),
      v(basis_size * block_dim, 0.0) {
  if (k == 0 || l == 0) throw std::invalid_argument("SharedBasis: k and l must be >= 1");
}

std::vector<double> SharedBasis::combine(std::span<const double> alpha) const {
  if (alpha.size() != k)
    throw std::invalid_argument("combine: alpha length != k");
  std::vector<double> c(k * l);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < l; ++j) c[i * l + j] = alpha[i] * v[i * l + j];
  return projector.apply(c);
}

void SharedBasis::gradients(std::span<const double> alpha, std::span<const double> g,
                            std::span<double> dv, std::span<double> dalpha) const {
  if (alpha.size() != k || dv.size() != k * l || dalpha.size() != k)
    throw std::invalid_argument("gradients: inconsistent shapes");
  const std::vector<double> u = projector.adjoint_apply(g);
  for (std::size_t i = 0; i < k; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < l; ++j) {
      dv[i * l + j] = alpha[i] * u[i * l + j];
      dot += v[i * l + j] * u[i * l + j];
    }
    dalpha[i] = dot;
  }
}

void SharedBasis::alpha_gradient(std::span<const double> g, std::span<double> dalpha) const {
  if (dalpha.size() != k) throw std::invalid_argument("alpha_gradient: dalpha length != k");
  const std::vector<double> u = projector.adjoint_apply(g);
  for (std::size_t i = 0; i < k; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < l; ++j) dot += v[i * l + j] * u[i * l + j];
    dalpha[i] = dot;
  }
}

}  // namespace lowdim
