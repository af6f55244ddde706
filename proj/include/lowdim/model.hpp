#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lowdim/network.hpp"
#include "lowdim/projector.hpp"

namespace lowdim {

enum class ModeKind { direct, single, shared, transfer };

ModeKind mode_from_string(const std::string& s);
std::string to_string(ModeKind m);

// Per-mode gradient bundle, aligned with SubspaceModel::trainables().
struct GradBundle {
  std::vector<std::vector<double>> parts;
};

// A network plus one of four parametrizations over a frozen theta0 and
// frozen projectors:
//   direct    theta itself is trainable
//   single    theta = theta0 + P w
//   shared    theta_j = theta0 + Q alpha_j, Q = [P_1 v_1 .. P_k v_k]
//   transfer  theta = theta0 + Q alpha + P w with Q (and v) frozen
class SubspaceModel {
 public:
  static SubspaceModel direct(NetworkSpec spec, std::uint64_t theta0_seed);
  static SubspaceModel single(NetworkSpec spec, std::uint64_t theta0_seed, std::size_t coeff_dim,
                              std::uint64_t projector_seed);
  static SubspaceModel shared(NetworkSpec spec, std::uint64_t theta0_seed, std::size_t block_dim,
                              std::size_t basis_size, std::size_t task_count,
                              std::uint64_t basis_seed);
  // basis may be empty (k = 0: from-scratch in a fresh random subspace);
  // extra_dim may be 0 (pure reuse of the learned basis).
  static SubspaceModel transfer(NetworkSpec spec, std::uint64_t theta0_seed,
                                std::optional<SharedBasis> frozen_basis, std::size_t extra_dim,
                                std::uint64_t projector_seed);

  const NetworkSpec& network() const { return spec_; }
  ModeKind mode() const { return mode_; }
  std::uint64_t theta0_seed() const { return theta0_seed_; }
  std::size_t task_count() const { return alphas_.size(); }
  std::size_t ambient_dim() const { return spec_.param_count(); }
  const std::vector<double>& theta0() const { return theta0_; }

  // Ambient weight vector for the mode's formula.  task is required iff
  // mode == shared and rejected otherwise.
  std::vector<double> realize(std::optional<std::size_t> task = std::nullopt) const;

  // Pullback of an ambient gradient through the mode's frozen linear maps.
  GradBundle coefficient_grad(std::optional<std::size_t> task, std::span<const double> ambient_grad) const;

  // Trainable coefficient storage, in a fixed order per mode:
  //   direct {theta}; single {w}; shared {v, alpha_1..alpha_n}; transfer {alpha, w}.
  std::vector<std::vector<double>*> trainables();
  std::vector<const std::vector<double>*> trainables() const;

  std::size_t trainable_count() const;
  // lk/n + k as an exact reduced fraction (shared mode only).
  void amortized_count(std::int64_t& num, std::int64_t& den) const;
  double amortized_count() const;

  // Mode internals, used by training and compression.
  const SharedBasis& basis() const;
  SharedBasis& basis();
  const KroneckerProjector& projector() const;
  std::vector<double>& w() { return w_; }
  const std::vector<double>& w() const { return w_; }
  std::vector<std::vector<double>>& alphas() { return alphas_; }
  const std::vector<std::vector<double>>& alphas() const { return alphas_; }
  std::vector<double>& alpha() { return alpha_; }
  const std::vector<double>& alpha() const { return alpha_; }
  std::size_t basis_size() const { return basis_ ? basis_->k : 0; }
  std::size_t block_dim() const { return basis_ ? basis_->l : 0; }
  std::size_t extra_dim() const { return projector_ ? projector_->coeff_dim() : 0; }

 private:
  SubspaceModel() = default;

  NetworkSpec spec_;
  std::uint64_t theta0_seed_ = 0;
  ModeKind mode_ = ModeKind::direct;
  std::vector<double> theta0_;  // cached; regenerable from the seed

  std::vector<double> theta_;                 // direct
  std::optional<KroneckerProjector> projector_;  // single, transfer
  std::vector<double> w_;                     // single, transfer
  std::optional<SharedBasis> basis_;          // shared, transfer (frozen there)
  std::vector<std::vector<double>> alphas_;   // shared, one per task
  std::vector<double> alpha_;                 // transfer
};

// Checkpoint file: "LDCK" magic, u32 little-endian JSON header length, JSON
// header (spec, mode, seeds, dims), then all coefficient vectors (trainables
// in order, plus the frozen basis v for transfer) as little-endian float64.
void save_checkpoint(const SubspaceModel& model, const std::string& path);
SubspaceModel load_checkpoint(const std::string& path);

}  // namespace lowdim
