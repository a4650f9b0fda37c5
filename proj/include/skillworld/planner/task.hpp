#pragma once

// Goal-conditioned task model over the learned abstract model.

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skillworld/autodiff/adam.hpp"
#include "skillworld/autodiff/nn.hpp"
#include "skillworld/model/model.hpp"
#include "skillworld/model/train.hpp"
#include "skillworld/planner/env.hpp"
#include "skillworld/util/rng.hpp"

namespace skillworld::planner {

/// (z_prev, o_prev, z); o_prev equal to the option count marks a trajectory start.
struct AbstractState {
  std::vector<double> z_prev;
  std::size_t o_prev = 0;
  std::vector<double> z;
};

inline AbstractState initial_abstract_state(const model::AbstractModel& m, std::vector<double> z) {
  return {std::vector<double>(m.d_z(), 0.0), m.o_bot(), std::move(z)};
}

/// Planner input row: z_prev, one-hot o_prev over O + 1, z.
inline std::vector<double> features(const AbstractState& s, std::size_t n_options) {
  std::vector<double> f(s.z_prev);
  for (std::size_t o = 0; o <= n_options; ++o) f.push_back(o == s.o_prev ? 1.0 : 0.0);
  f.insert(f.end(), s.z.begin(), s.z.end());
  return f;
}

inline std::size_t feature_dim(const model::AbstractModel& m) { return 2 * m.d_z() + m.n_options() + 1; }

struct TaskConfig {
  double r_task = 100.0;
  double reward_scale = 0.01;       // applied to all planner rewards
  double init_threshold = 0.5;      // predicted initiation probability for availability
  double goal_quantile = 0.95;
  std::size_t goal_samples = 200;
  std::size_t classifier_steps = 200;  // per refresh
  std::size_t classifier_batch = 32;
  double classifier_lr = 1e-3;
  std::size_t classifier_min_positives = 10;
  double classifier_recall = 0.95;  // on the calibration set, to take precedence

  void validate() const {
    if (!(reward_scale > 0.0)) throw std::invalid_argument("task config: reward_scale must be positive");
    if (!(goal_quantile > 0.0 && goal_quantile <= 1.0)) throw std::invalid_argument("task config: bad goal_quantile");
    if (!(init_threshold > 0.0 && init_threshold < 1.0))
      throw std::invalid_argument("task config: init_threshold must lie in (0, 1)");
  }

  nlohmann::json to_json() const {
    return {{"r_task", r_task},
            {"reward_scale", reward_scale},
            {"init_threshold", init_threshold},
            {"goal_quantile", goal_quantile},
            {"goal_samples", goal_samples},
            {"classifier_steps", classifier_steps},
            {"classifier_min_positives", classifier_min_positives}};
  }
};

/// R_G = R + r_task * 1[z in G]; goal states are absorbing.
class TaskModel {
 public:
  TaskModel(const model::AbstractModel& base, const TaskConfig& cfg, std::vector<std::vector<double>> goal_z, Rng& rng)
      : base_(&base), cfg_(cfg), calibration_(std::move(goal_z)) {
    cfg_.validate();
    if (calibration_.empty()) throw std::invalid_argument("task model: goal region is empty (no encoded goal samples)");
    const std::size_t dz = base.d_z();
    center_.assign(dz, 0.0);
    for (const auto& z : calibration_)
      for (std::size_t d = 0; d < dz; ++d) center_[d] += z[d] / static_cast<double>(calibration_.size());
    std::vector<double> dist;
    for (const auto& z : calibration_) dist.push_back(distance(z));
    std::sort(dist.begin(), dist.end());
    const auto q = static_cast<std::size_t>(std::ceil(cfg_.goal_quantile * static_cast<double>(dist.size()))) - 1;
    radius_ = dist[std::min(q, dist.size() - 1)];
    if (!std::isfinite(radius_)) throw std::invalid_argument("task model: goal radius is not finite");
    classifier_ = ad::MLP(dz, {128, 128}, 1, rng);
    ad::NamedParams p;
    classifier_.collect("goal", p);
    opt_.emplace(ad::tensors_of(p), ad::AdamConfig{.lr = cfg_.classifier_lr});
  }

  const model::AbstractModel& base() const { return *base_; }
  const TaskConfig& config() const { return cfg_; }
  const std::vector<double>& center() const { return center_; }
  double radius() const { return radius_; }
  bool classifier_active() const { return classifier_active_; }

  double distance(const std::vector<double>& z) const {
    double s = 0.0;
    for (std::size_t d = 0; d < z.size(); ++d) s += (z[d] - center_[d]) * (z[d] - center_[d]);
    return std::sqrt(s);
  }

  bool in_ball(const std::vector<double>& z) const { return distance(z) <= radius_; }

  double classifier_prob(const std::vector<double>& z) const {
    ad::NoGradGuard ng;
    return ad::sigmoid_scalar(classifier_(ad::Tensor::from(1, z.size(), z)).item());
  }

  /// The calibrated ball, narrowed by the classifier once it has qualified.
  /// The classifier alone fires on encodings far from any real data, which
  /// imagined rollouts reach.
  bool in_goal(const std::vector<double>& z) const {
    return in_ball(z) && (!classifier_active_ || classifier_prob(z) >= 0.5);
  }

  std::vector<std::uint8_t> in_goal_batch(const std::vector<double>& z, std::size_t B) const {
    const std::size_t dz = base_->d_z();
    std::vector<std::uint8_t> out(B);
    for (std::size_t i = 0; i < B; ++i)
      out[i] = in_ball(std::vector<double>(z.begin() + static_cast<std::ptrdiff_t>(i * dz),
                                           z.begin() + static_cast<std::ptrdiff_t>((i + 1) * dz)));
    if (classifier_active_) {
      ad::NoGradGuard ng;
      const auto l = classifier_(ad::Tensor::from(B, dz, z)).values();
      for (std::size_t i = 0; i < B; ++i) out[i] = out[i] && l[i] >= 0.0;
    }
    return out;
  }

  std::vector<Mask> mask_batch(const std::vector<double>& z, std::size_t B) const {
    const std::size_t O = base_->n_options();
    const auto p = base_->initiation_probs_batch(z, B);
    std::vector<Mask> out(B, Mask(O));
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t o = 0; o < O; ++o) out[i][o] = p[i * O + o] >= cfg_.init_threshold;
    return out;
  }

  /// Predicted availability of each option at z.
  Mask mask(const std::vector<double>& z) const {
    const auto p = base_->initiation_probs(z);
    Mask m(p.size());
    for (std::size_t o = 0; o < p.size(); ++o) m[o] = p[o] >= cfg_.init_threshold;
    return m;
  }

  /// Unscaled task reward at s given the base model's reward prediction.
  double reward(const AbstractState& s, double base_reward) const {
    return base_reward + (in_goal(s.z) ? cfg_.r_task : 0.0);
  }

  /// Retrains the goal classifier on labeled real encodings (plus the
  /// calibration set as positives) and re-qualifies it.
  void refresh(const std::vector<std::pair<std::vector<double>, bool>>& labeled, Rng& rng) {
    std::vector<const std::vector<double>*> pos, neg;
    std::size_t real_pos = 0;
    for (const auto& [z, y] : labeled) {
      (y ? pos : neg).push_back(&z);
      real_pos += y;
    }
    for (const auto& z : calibration_) pos.push_back(&z);
    if (neg.empty() || cfg_.classifier_steps == 0) return;
    const std::size_t B = cfg_.classifier_batch, dz = base_->d_z();
    for (std::size_t step = 0; step < cfg_.classifier_steps; ++step) {
      std::vector<double> x(B * dz), y(B);
      for (std::size_t i = 0; i < B; ++i) {
        const bool positive = i % 2 == 0;  // balanced batches
        const auto& src = positive ? pos : neg;
        const auto* z = src[uniform_index(rng, src.size())];
        std::copy(z->begin(), z->end(), x.begin() + i * dz);
        y[i] = positive;
      }
      const auto logits = classifier_(ad::Tensor::from(B, dz, std::move(x)));
      const auto loss = model::weighted_bce(logits, ad::Tensor::from(B, 1, y), ad::Tensor::full(B, 1, 1.0));
      opt_->zero_grad();
      ad::backward(loss);
      opt_->step();
    }
    std::size_t hits = 0;
    for (const auto& z : calibration_) hits += classifier_prob(z) >= 0.5;
    last_recall_ = static_cast<double>(hits) / static_cast<double>(calibration_.size());
    classifier_active_ = real_pos >= cfg_.classifier_min_positives && last_recall_ >= cfg_.classifier_recall;
  }

  double last_recall() const { return last_recall_; }

 private:
  const model::AbstractModel* base_;
  TaskConfig cfg_;
  std::vector<std::vector<double>> calibration_;
  std::vector<double> center_;
  double radius_ = 0.0;
  ad::MLP classifier_;
  std::optional<ad::Adam> opt_;
  bool classifier_active_ = false;
  double last_recall_ = 0.0;
};

/// Encodes goal samples from the environment into a calibrated goal region.
inline TaskModel make_task_model(const model::AbstractModel& m, const OptionEnv& env, const TaskConfig& cfg, Rng& rng) {
  std::vector<std::vector<double>> zs;
  for (const auto& g : env.goal_samples(cfg.goal_samples, rng)) zs.push_back(m.encode_one(env.observation(g)));
  return TaskModel(m, cfg, std::move(zs), rng);
}

}  // namespace skillworld::planner
