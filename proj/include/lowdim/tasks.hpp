#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "lowdim/tensor.hpp"

namespace lowdim {

// One labeled split: examples row-major in x, labels in [0, classes).
struct Dataset {
  std::size_t dim = 0;
  std::size_t classes = 0;
  std::vector<double> x;
  std::vector<int> y;

  std::size_t size() const { return y.size(); }
  Tensor features() const { return Tensor({size(), dim}, x); }
  void push(const double* row, int label);
  void validate() const;
};

struct Task {
  Dataset train, val, test;
  nlohmann::json provenance;
};

struct TaskSet {
  std::size_t input_dim = 0;
  std::size_t classes = 0;
  std::vector<Task> tasks;

  std::size_t size() const { return tasks.size(); }
  std::size_t samples_per_task() const;  // min train size over tasks
  void validate() const;
};

// Splits a pool so the train part has exactly m examples and val/test follow
// the 70/20/10 convention relative to it (val = 2m/7, test = m/7, rounded).
Task split_pool(const Dataset& pool, std::size_t m, std::uint64_t seed);

// Synthetic multi-class base set: class centers on a random simplex-ish
// layout, isotropic noise.  Stands in for image data at desk scale.
Dataset gen_blobs(std::size_t count, std::size_t dim, std::size_t classes, double spread,
                  std::uint64_t seed);

// Per task: an m-sample of the base with a fixed random label permutation.
TaskSet gen_permuted_labels(const Dataset& base, std::size_t n, std::size_t m, std::uint64_t seed);

// Per task: a fixed permutation of a random subset of input coordinates.
TaskSet gen_shuffled_pixels(const Dataset& base, std::size_t n, std::size_t m,
                            std::size_t pixels_to_shuffle, std::uint64_t seed);

// Teacher tasks whose target functions live in a shared low-rank span of the
// input space.  Labels come from a bent two-region boundary in the projected
// coordinates, plus optional label-flip noise; relatedness_rank = n with
// per-task orthogonal directions gives unrelated tasks.
struct TeacherOptions {
  std::size_t input_dim = 32;
  std::size_t n = 20;
  std::size_t m = 600;
  std::size_t relatedness_rank = 3;
  double noise = 0.0;
  std::size_t classes = 2;
  bool orthogonal = false;  // force per-task orthogonal directions (rank = n)
  double nonlinearity = 1.0;  // 0 = linear boundaries
  double task_rotation = 1.0;  // 0 = identical rules, 1 = fully rotated per task
  double margin = 0.0;  // orthogonal teachers: shift inputs along the task
                        // direction so classes separate with this gap
};

TaskSet gen_teacher_tasks(const TeacherOptions& opt, std::uint64_t seed);

// IDX (big-endian MNIST container).  load pairs an image file with a label
// file; pixels scale to [0,1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
void write_idx_images(const std::string& path, const std::vector<std::uint8_t>& pixels,
                      std::size_t count, std::size_t rows, std::size_t cols);
void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels);

// CSV with a declared schema: {"label": col, "features": [cols...],
// "categorical": [cols...]}.  Categoricals expand to one-hot columns.
Dataset load_csv(const std::string& path, const nlohmann::json& schema);

}  // namespace lowdim
