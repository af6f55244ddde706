#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lowdim/tensor.hpp"

namespace lowdim {

// Matrix-free random expansion from coefficient space R^d to ambient weight
// space R^D.  The implied dense map is the first D rows and first d columns
// of (Q1 (x) Q2) / sqrt(D) with Q1, Q2 i.i.d. standard normal factors drawn
// from the seed.  Factor shapes: D1 = ceil(sqrt(D)), D2 = ceil(D/D1), same
// rule on d; inputs are zero-padded and outputs truncated, so the dense
// matrix never has to exist.  The scale uses the true ambient D, not the
// padded product.
class KroneckerProjector {
 public:
  KroneckerProjector(std::size_t ambient_dim, std::size_t coeff_dim, std::uint64_t seed);

  std::size_t ambient_dim() const { return ambient_; }
  std::size_t coeff_dim() const { return coeff_; }
  std::uint64_t seed() const { return seed_; }

  // theta = P w, computed as vec(Q2 * W * Q1^T) / sqrt(D).
  std::vector<double> apply(std::span<const double> w) const;

  // w = P^T g, the exact transpose of apply.
  std::vector<double> adjoint_apply(std::span<const double> g) const;

  // Factor shapes, exposed for tests and the dense oracle.
  std::size_t rows1() const { return d1_rows_; }
  std::size_t cols1() const { return d1_cols_; }
  std::size_t rows2() const { return d2_rows_; }
  std::size_t cols2() const { return d2_cols_; }

 private:
  std::size_t ambient_, coeff_;
  std::uint64_t seed_;
  std::size_t d1_rows_, d1_cols_;  // Q1 is d1_rows x d1_cols
  std::size_t d2_rows_, d2_cols_;  // Q2 is d2_rows x d2_cols
  double scale_;
  // Rebuilt from the seed at construction; never serialized.
  Tensor q1_, q2_;
};

// Learned expansion basis Q = [P_1 v_1, ..., P_k v_k]: one Kronecker map of
// coefficient dimension k*l whose i-th block of l columns plays the role of
// P_i, plus the learnable block coefficients v_i.
struct SharedBasis {
  KroneckerProjector projector;  // coeff dim = k * l
  std::size_t k = 0;
  std::size_t l = 0;
  std::vector<double> v;  // k blocks of length l

  SharedBasis(std::size_t ambient_dim, std::size_t basis_size, std::size_t block_dim,
              std::uint64_t seed);

  // Q alpha = sum_i alpha_i P_i v_i.
  std::vector<double> combine(std::span<const double> alpha) const;

  // Pullback of an ambient gradient g: with u = Q'^T g split into k blocks,
  // dv_i = alpha_i u_i and dalpha_i = <v_i, u_i>.
  void gradients(std::span<const double> alpha, std::span<const double> g,
                 std::span<double> dv, std::span<double> dalpha) const;

  // alpha-gradient only; v stays frozen (transfer mode).
  void alpha_gradient(std::span<const double> g, std::span<double> dalpha) const;
};

}  // namespace lowdim
