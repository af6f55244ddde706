#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lowdim/codebook.hpp"
#include "lowdim/model.hpp"

namespace lowdim {

// Hyperparameter grids that form the decoding context of a bundle.  The
// chosen entries are transmitted as grid indices inside the encoded parts
// and charged to the encoding lengths; the grids themselves are fixed before
// seeing any training data.
struct EncodingGrids {
  std::vector<std::size_t> l_grid;
  std::vector<std::size_t> k_grid;
  std::vector<std::size_t> rg_grid = {10, 15, 20, 30};
  std::vector<std::size_t> rl_grid = {3, 10, 15, 20, 25, 30};
  std::vector<double> lr_grid = {0.1, 0.01, 0.001};
  std::vector<std::size_t> r_single_grid = {2, 3, 5, 10, 15, 20, 30, 40};

  static std::size_t index_bits(std::size_t grid_size);
  std::size_t index_of_l(std::size_t l) const;
  std::size_t index_of_k(std::size_t k) const;
  std::size_t index_of_rg(std::size_t r) const;
  std::size_t index_of_rl(std::size_t r) const;
  std::size_t index_of_lr(double lr) const;
  std::size_t index_of_r_single(std::size_t r) const;
};

// Exact bit accounting of one encoded part.  total includes the 32-bit
// self-delimiting length prefix; certificate code consumes total only.
struct PartLengths {
  std::size_t prefix_bits = 0;
  std::size_t hyper_bits = 0;
  std::size_t codebook_bits = 0;
  std::size_t table_bits = 0;
  std::size_t stream_bits = 0;
  std::size_t total = 0;
};

// Self-describing bitstream for a shared-mode model: header context, a
// meta part (global codebook + jointly coded v_1..v_k) and a multitask part
// (local codebook + jointly coded alpha_1..alpha_n).
struct EncodedBundle {
  std::vector<std::uint8_t> bytes;  // the on-disk container
  PartLengths meta;                 // l(E)
  PartLengths multitask;            // l_E(f_1..f_n)

  std::size_t meta_bits() const { return meta.total; }
  std::size_t multitask_bits() const { return multitask.total; }
  double bits_per_task(std::size_t n) const {
    return static_cast<double>(meta.total + multitask.total) / static_cast<double>(n);
  }
};

struct DecodedBundle {
  SubspaceModel model;   // shared mode, coefficients exactly at codebook centers
  Codebook global_codebook;
  Codebook local_codebook;
  double lr = 0.0;       // transmitted hyperparameter choices
  PartLengths meta;
  PartLengths multitask;
};

// Quantizes (snapping to the codebooks) and encodes a shared-mode model.
// lr is the training-time choice, charged as a grid index.
EncodedBundle encode_bundle(const SubspaceModel& model, const Codebook& global_codebook,
                            const Codebook& local_codebook, const EncodingGrids& grids,
                            double lr);

DecodedBundle decode_bundle(const std::vector<std::uint8_t>& bytes, const EncodingGrids& grids);

void save_bundle(const EncodedBundle& bundle, const std::string& path);
std::vector<std::uint8_t> load_bundle_bytes(const std::string& path);

// Single-task coefficient encoding: r-grid index, codebook, count table,
// arithmetic stream, all behind a 32-bit prefix.
struct SingleEncoding {
  std::vector<std::uint8_t> bytes;
  std::size_t bit_count = 0;  // prefix included
  PartLengths parts;
};

SingleEncoding encode_single_coefficients(std::span<const double> w, const Codebook& codebook,
                                          const EncodingGrids& grids);
std::vector<double> decode_single_coefficients(const SingleEncoding& enc,
                                               const EncodingGrids& grids, std::size_t count);

// Transfer coefficients (alpha then w, one joint stream).  reuse_codebook
// spends the 1-bit flag and reuses `codebook` without re-transmitting it;
// otherwise the codebook is charged like a fresh single-task one.
SingleEncoding encode_transfer_coefficients(std::span<const double> alpha,
                                            std::span<const double> w, const Codebook& codebook,
                                            bool reuse_codebook, const EncodingGrids& grids);

// Joint-versus-separate accounting on an n x k index matrix: the joint side
// is codebook + one count table + one stream over all nk indices; the
// separate side is codebook + per-task tables and streams.  Mirrors the
// comparison the container itself makes; no prefixes on either side.
struct JointVsSeparate {
  std::size_t joint_bits = 0;
  std::size_t separate_bits = 0;
};

JointVsSeparate joint_vs_separate(const std::vector<std::vector<std::uint32_t>>& task_indices,
                                  std::size_t r);

// Kraft-McMillan helpers for enumerated codeword sets.
bool is_prefix_free(const std::vector<std::vector<std::uint8_t>>& words,
                    const std::vector<std::size_t>& bit_lengths);
double kraft_sum(const std::vector<std::size_t>& bit_lengths);

}  // namespace lowdim
