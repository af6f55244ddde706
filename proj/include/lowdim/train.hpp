#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lowdim/codebook.hpp"
#include "lowdim/model.hpp"
#include "lowdim/tasks.hpp"

namespace lowdim {

struct TrainConfig {
  std::size_t epochs = 400;
  double lr = 0.001;
  std::vector<double> lr_grid = {0.1, 0.01, 0.001};
  double weight_decay = 5e-4;
  std::size_t batch_size = 128;
  std::size_t finetune_epochs = 30;
  double finetune_lr = 1e-4;
  std::uint64_t shuffle_seed = 1;
  std::size_t eval_every = 1;  // 0 = evaluate at the final epoch only

  void validate() const;  // lr must come from lr_grid, epochs >= 1
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double eval_acc = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  double final_train_acc = 0.0;
  double final_eval_acc = 0.0;
};

// Joint minimization of the mean cross-entropy over all provided tasks.
// shared mode wants exactly model.task_count() tasks, every other mode one.
// Throws on divergence (non-finite loss).
TrainHistory train(SubspaceModel& model, const TaskSet& tasks, const TrainConfig& config);

// Fraction of correct argmax predictions on one split.
double evaluate(const SubspaceModel& model, const Dataset& data,
                std::optional<std::size_t> task = std::nullopt);

// Mean validation accuracy across tasks (shared mode) or over the one task.
double evaluate_all(const SubspaceModel& model, const TaskSet& tasks);

// Straight-through quantized fine-tune: gradients are taken at snapped
// coefficients, SGD updates hit the latent values, and every step re-snaps.
// constrained_parts selects which trainable parts live on the codebook;
// frozen_parts receive no updates at all; everything else trains freely.
void finetune_quantized(SubspaceModel& model, const TaskSet& tasks, const Codebook& codebook,
                        const std::vector<std::size_t>& constrained_parts,
                        const std::vector<std::size_t>& frozen_parts, const TrainConfig& config);

// The two-stage quantization of a shared-mode model: global codebook over v
// (fine-tune with free alphas), then local codebook over the alphas with v
// frozen at its quantized values.
struct QuantizedModelCodebooks {
  Codebook global;
  Codebook local;
};

QuantizedModelCodebooks quantize_shared_model(SubspaceModel& model, const TaskSet& tasks,
                                              std::size_t r_global, std::size_t r_local,
                                              std::size_t restarts, const TrainConfig& config,
                                              std::uint64_t seed);

// Single-codebook variant for single/transfer-mode models (all trainables
// constrained at once).
Codebook quantize_coefficient_model(SubspaceModel& model, const TaskSet& tasks, std::size_t r,
                                    std::size_t restarts, const TrainConfig& config,
                                    std::uint64_t seed);

struct SearchPoint {
  std::string mode;       // "single" or "shared"
  std::size_t d_or_l = 0;
  std::size_t k = 0;      // 0 for single mode
  double lr = 0.0;
  std::uint64_t seed = 0;
  double train_acc = 0.0;
  double eval_acc = 0.0;
  double amortized = 0.0;  // d for single mode, lk/n + k for shared
  bool reached = false;
};

struct DimensionSearchResult {
  double baseline_accuracy = 0.0;  // A
  double target_accuracy = 0.0;    // 0.9 * A by default
  bool reached = false;
  SearchPoint best;
  std::int64_t amortized_num = 0;  // exact lk/n + k (or d/1) of the winner
  std::int64_t amortized_den = 1;
  double best_attained = 0.0;      // best accuracy seen, for "unreachable" reports
  std::vector<SearchPoint> trace;
};

struct SearchConfig {
  NetworkSpec network;
  TrainConfig training;
  double target_fraction = 0.9;
  std::optional<double> baseline_accuracy;  // skip the direct-mode baseline if set
  std::uint64_t master_seed = 1;
  std::size_t jobs = 1;
  std::vector<SearchPoint> warm_start;  // prior trace rows; matching runs are reused
};

// Smallest d whose per-task single-subspace average validation accuracy
// reaches target_fraction * A; ascending scan with early stop.
DimensionSearchResult id_search(const TaskSet& tasks, const std::vector<std::size_t>& d_grid,
                                const SearchConfig& config);

// Smallest lk/n + k over the (l,k) grid meeting the same target; candidates
// visited in ascending amortized order, ties toward smaller k then smaller l.
DimensionSearchResult aid_search(const TaskSet& tasks,
                                 const std::vector<std::pair<std::size_t, std::size_t>>& lk_grid,
                                 const SearchConfig& config);

// Direct-mode per-task training average: the A of the search definitions.
double baseline_accuracy(const NetworkSpec& network, const TaskSet& tasks,
                         const TrainConfig& config, std::uint64_t master_seed);

void write_trace_csv(const std::string& path, const std::vector<SearchPoint>& trace);

}  // namespace lowdim
