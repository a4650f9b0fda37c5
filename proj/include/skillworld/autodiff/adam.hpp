#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "skillworld/autodiff/nn.hpp"
#include "skillworld/autodiff/tensor.hpp"

namespace skillworld::ad {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. A step with any non-finite gradient entry is refused:
/// parameters and moments stay untouched and refused_steps() increments.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg = {}) : params_(std::move(params)), cfg_(cfg) {
    if (!(cfg_.lr > 0.0)) throw std::invalid_argument("adam: learning rate must be positive");
    for (const auto& p : params_) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  bool step() {
    for (const auto& p : params_)
      for (double g : p.grad())
        if (!std::isfinite(g)) {
          ++refused_;
          return false;
        }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& x = params_[k].mutable_values();
      const auto& g = params_[k].grad();
      if (g.empty()) continue;  // never reached by backward: zero gradient
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < x.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        // Moments of parameters that stop receiving gradient (dead relu units)
        // decay geometrically; flushing subnormals keeps the arithmetic fast.
        if (std::fabs(m[i]) < std::numeric_limits<double>::min()) m[i] = 0.0;
        if (v[i] < std::numeric_limits<double>::min()) v[i] = 0.0;
        x[i] -= cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
      }
    }
    return true;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  std::uint64_t steps() const { return t_; }
  std::uint64_t refused_steps() const { return refused_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
  std::uint64_t refused_ = 0;
};

}  // namespace skillworld::ad
