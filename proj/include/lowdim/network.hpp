#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lowdim/tensor.hpp"

namespace lowdim {

enum class Activation { relu, elu };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

// Fully connected architecture.  theta layout per layer: weight matrix
// (out x in, row-major) followed by bias (out).
struct NetworkSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t output_dim = 0;
  Activation activation = Activation::relu;

  std::vector<std::size_t> layer_widths() const;
  std::size_t param_count() const;  // D, exact sum of weight+bias counts
  void validate() const;
};

enum class LossKind { cross_entropy, zero_one };

struct LossResult {
  double value = 0.0;
  std::vector<double> grad;  // d loss / d theta; empty for zero_one
  bool has_grad = false;
};

// Batch logits.  x is batch x input_dim.
Tensor forward(const NetworkSpec& spec, std::span<const double> theta, const Tensor& x);

// Mean loss over the batch.  cross_entropy supports gradients (reverse mode);
// zero_one is the misclassification fraction and never has one.
LossResult loss_and_grad(const NetworkSpec& spec, std::span<const double> theta,
                         const Tensor& x, std::span<const int> labels, LossKind kind,
                         bool want_grad);

// Layer-wise fan-in initialization: weights ~ N(0, 1/fan_in), biases 0.
std::vector<double> init_theta(const NetworkSpec& spec, std::uint64_t seed);

}  // namespace lowdim
