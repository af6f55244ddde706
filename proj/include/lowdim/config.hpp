#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lowdim/bundle.hpp"
#include "lowdim/network.hpp"
#include "lowdim/tasks.hpp"
#include "lowdim/train.hpp"

namespace lowdim {

// Thrown for schema violations; the CLI maps it to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown for dataset problems; exit code 3.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  std::string kind;  // teacher | permuted_labels | shuffled_pixels | csv | idx
  std::size_t n = 1;
  std::size_t m = 600;
  // teacher
  std::size_t input_dim = 32;
  std::size_t rank = 3;
  double noise = 0.0;
  bool orthogonal = false;
  double nonlinearity = 1.0;
  double task_rotation = 1.0;
  double margin = 0.0;
  // synthetic base for permuted_labels / shuffled_pixels
  std::size_t base_count = 0;  // 0 = derived from n and m
  std::size_t base_dim = 64;
  std::size_t base_classes = 10;
  double base_spread = 1.0;
  std::size_t pixels_to_shuffle = 200;
  // files
  std::string path;          // csv
  std::string images, labels;  // idx
  nlohmann::json schema;     // csv schema
};

struct ModeConfig {
  std::string kind = "direct";  // direct | single | shared | transfer
  std::size_t d = 0;
  std::size_t l = 0;
  std::size_t k = 0;
  std::size_t k_prime = 0;
  std::string bundle;  // transfer: the MTL bundle to reuse
};

struct SearchSectionConfig {
  std::vector<std::size_t> d_grid;
  std::vector<std::pair<std::size_t, std::size_t>> lk_grid;
  double target_fraction = 0.9;
  std::optional<double> baseline_accuracy;
  std::size_t jobs = 1;
};

struct CompressionConfig {
  std::size_t r_global = 10;
  std::size_t r_local = 10;
  std::size_t r_single = 10;
  std::size_t restarts = 5;
  EncodingGrids grids;  // l/k grids default to the standard wide grids
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  DatasetConfig dataset;
  NetworkSpec model;
  ModeConfig mode;
  TrainConfig training;
  SearchSectionConfig search;
  CompressionConfig compression;
  double delta = 0.05;

  nlohmann::json raw;  // the parsed document, echoed into output directories
};

ExperimentConfig parse_experiment_config(const nlohmann::json& doc);
ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides);

// Builds the configured TaskSet; generators key off seed so the result is
// regenerable from the config alone.
TaskSet build_taskset(const ExperimentConfig& config);

// Sub-seed labels, all derived from the master seed.
namespace seeds {
constexpr std::uint64_t kDataset = 1;
constexpr std::uint64_t kTheta0 = 2;
constexpr std::uint64_t kProjector = 3;
constexpr std::uint64_t kBasis = 4;
constexpr std::uint64_t kShuffle = 5;
constexpr std::uint64_t kKmeans = 6;
constexpr std::uint64_t kSearch = 7;
}  // namespace seeds

std::uint64_t derived_seed(std::uint64_t master, std::uint64_t label);

// Atomic write: temp file in the same directory, then rename.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace lowdim
