#pragma once

// Central finite-difference gradient checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "skillworld/autodiff/tensor.hpp"

namespace skillworld::ad {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose +-h step flips a relu
  std::string worst;
};

struct GradCheckOptions {
  double h = 1e-5;
  double abs_floor = 1e-6;  // denominator floor for near-zero gradients
};

/// Compares backward() of f against central differences over every entry of
/// every input. f must rebuild its graph from the inputs on each call.
inline GradCheckResult check_gradients(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                                       GradCheckOptions opt = {}) {
  for (auto& t : inputs) t.zero_grad();
  std::vector<std::vector<unsigned char>> base_pattern;
  {
    ReluPatternRecorder rec;
    backward(f());
    base_pattern = rec.patterns();
  }
  GradCheckResult res;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& t = inputs[k];
    const auto analytic = t.grad();
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double x0 = t.values()[i];
      auto eval = [&](double x, bool& same) {
        t.mutable_values()[i] = x;
        ReluPatternRecorder rec;
        double v;
        {
          NoGradGuard ng;
          v = f().item();
        }
        same = rec.patterns() == base_pattern;
        return v;
      };
      bool same_p = true, same_m = true;
      const double fp = eval(x0 + opt.h, same_p);
      const double fm = eval(x0 - opt.h, same_m);
      t.mutable_values()[i] = x0;
      if (!same_p || !same_m) {
        ++res.skipped;
        continue;
      }
      const double numeric = (fp - fm) / (2.0 * opt.h);
      const double a = analytic.empty() ? 0.0 : analytic[i];
      const double err = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), opt.abs_floor});
      ++res.checked;
      if (err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst = "input " + std::to_string(k) + " entry " + std::to_string(i) + ": analytic " + std::to_string(a) +
                    " numeric " + std::to_string(numeric);
      }
    }
  }
  return res;
}

}  // namespace skillworld::ad
