#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace lowdim {

// Adam with decoupled-from-nothing L2 (weight decay added to the gradient,
// matching the torch.optim.Adam convention).
class Adam {
 public:
  Adam(double lr, double weight_decay, std::size_t param_count)
      : lr_(lr), weight_decay_(weight_decay), m_(param_count, 0.0), v_(param_count, 0.0) {}

  void step(std::span<double> p, std::span<const double> g) {
    if (p.size() != m_.size() || g.size() != m_.size())
      throw std::invalid_argument("Adam::step: size mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] + weight_decay_ * p[i];
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * gi;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * gi * gi;
      p[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
    }
  }

 private:
  double lr_;
  double weight_decay_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

class Sgd {
 public:
  explicit Sgd(double lr) : lr_(lr) {}

  void step(std::span<double> p, std::span<const double> g) const {
    if (p.size() != g.size()) throw std::invalid_argument("Sgd::step: size mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr_ * g[i];
  }

 private:
  double lr_;
};

}  // namespace lowdim
