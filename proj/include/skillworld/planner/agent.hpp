#pragma once

// Double DQN over abstract-state features with initiation masking.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "skillworld/autodiff/adam.hpp"
#include "skillworld/autodiff/nn.hpp"
#include "skillworld/autodiff/tensor.hpp"
#include "skillworld/util/rng.hpp"

namespace skillworld::planner {

using Mask = std::vector<std::uint8_t>;

/// Highest-valued available option, lowest index on ties; none if the mask
/// is empty.
inline std::optional<std::size_t> masked_argmax(const double* q, const Mask& mask) {
  std::optional<std::size_t> best;
  for (std::size_t o = 0; o < mask.size(); ++o)
    if (mask[o] && (!best || q[o] > q[*best])) best = o;
  return best;
}

/// Bootstrap factor of an option lasting tau ticks.
inline double option_discount(double gamma, double tau) { return std::pow(gamma, tau); }

struct AgentConfig {
  std::vector<std::size_t> hidden{128, 128};
  double lr = 1e-4;
  std::size_t batch_size = 32;
  std::size_t buffer_size = 100000;
  std::size_t replay_start = 1000;
  std::size_t update_interval = 5;
  std::size_t target_update = 10000;  // in agent steps
  double eps_start = 1.0;
  double eps_final = 0.1;
  std::size_t eps_decay_steps = 30000;
  double eval_eps = 0.001;
  double huber_delta = 1.0;

  void validate() const {
    if (batch_size == 0 || buffer_size == 0 || update_interval == 0 || target_update == 0)
      throw std::invalid_argument("agent config: counts must be positive");
    if (!(lr > 0.0)) throw std::invalid_argument("agent config: lr must be positive");
    for (double e : {eps_start, eps_final, eval_eps})
      if (!(e >= 0.0 && e <= 1.0)) throw std::invalid_argument("agent config: epsilons must lie in [0, 1]");
  }

  nlohmann::json to_json() const {
    return {{"hidden", hidden},           {"lr", lr},
            {"batch_size", batch_size},   {"buffer_size", buffer_size},
            {"replay_start", replay_start}, {"update_interval", update_interval},
            {"target_update", target_update}, {"eps_start", eps_start},
            {"eps_final", eps_final},     {"eps_decay_steps", eps_decay_steps},
            {"eval_eps", eval_eps},       {"huber_delta", huber_delta}};
  }
};

struct Transition {
  std::vector<double> features;
  std::size_t option = 0;
  double reward = 0.0;
  double discount = 1.0;  // gamma^tau
  std::vector<double> next_features;
  Mask next_mask;
  bool terminal = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}
  void push(Transition t) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(t));
    } else {
      data_[next_] = std::move(t);
    }
    next_ = (next_ + 1) % capacity_;
  }
  std::size_t size() const { return data_.size(); }
  const Transition& operator[](std::size_t i) const { return data_[i]; }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> data_;
};

class Agent {
 public:
  Agent(std::size_t feature_dim, std::size_t n_options, const AgentConfig& cfg, Rng& init_rng)
      : cfg_(cfg), n_options_(n_options), buffer_(cfg.buffer_size) {
    cfg_.validate();
    online_ = ad::MLP(feature_dim, cfg_.hidden, n_options, init_rng);
    target_ = ad::deep_copy(online_);
    ad::NamedParams p;
    online_.collect("q", p);
    opt_.emplace(ad::tensors_of(p), ad::AdamConfig{.lr = cfg_.lr});
  }

  std::size_t n_options() const { return n_options_; }
  std::size_t steps() const { return steps_; }
  std::size_t updates() const { return updates_; }
  const AgentConfig& config() const { return cfg_; }
  const ad::MLP& online() const { return online_; }
  ad::MLP& online() { return online_; }
  const ad::MLP& target() const { return target_; }
  const ReplayBuffer& buffer() const { return buffer_; }

  double epsilon() const {
    if (cfg_.eps_decay_steps == 0 || steps_ >= cfg_.eps_decay_steps) return cfg_.eps_final;
    const double f = static_cast<double>(steps_) / static_cast<double>(cfg_.eps_decay_steps);
    return cfg_.eps_start + f * (cfg_.eps_final - cfg_.eps_start);
  }

  /// Per-feature standardization (x - shift) * scale applied before both
  /// networks. Stored transitions stay raw.
  void set_input_scaling(std::vector<double> shift, std::vector<double> scale) {
    if (shift.size() != online_.in_dim() || scale.size() != online_.in_dim())
      throw std::invalid_argument("agent input scaling: width differs from the network input");
    shift_ = std::move(shift);
    scale_ = std::move(scale);
  }

  /// Q-values for a batch of feature rows, (B x O) row-major.
  std::vector<double> q_values(const std::vector<double>& features, std::size_t rows) const {
    ad::NoGradGuard ng;
    return online_(input(features, rows)).values();
  }

  /// Epsilon-greedy over available options; none if nothing is available.
  std::optional<std::size_t> act(const double* q, const Mask& mask, double eps, Rng& rng) const {
    std::vector<std::size_t> avail;
    for (std::size_t o = 0; o < mask.size(); ++o)
      if (mask[o]) avail.push_back(o);
    if (avail.empty()) return std::nullopt;
    if (eps > 0.0 && uniform01(rng) < eps) return avail[uniform_index(rng, avail.size())];
    return masked_argmax(q, mask);
  }

  /// Stores a transition, then trains and refreshes the target on schedule.
  void observe(Transition t, Rng& rng) {
    buffer_.push(std::move(t));
    ++steps_;
    if (steps_ >= cfg_.replay_start && steps_ % cfg_.update_interval == 0) {
      std::vector<std::size_t> idx(cfg_.batch_size);
      for (auto& i : idx) i = uniform_index(rng, buffer_.size());
      std::vector<const Transition*> batch;
      for (auto i : idx) batch.push_back(&buffer_[i]);
      update(batch);
    }
    if (steps_ % cfg_.target_update == 0) sync_target();
  }

  /// TD targets y = r + discount * Q_target(s', argmax_avail Q_online(s', .)).
  std::vector<double> targets(const std::vector<const Transition*>& batch) const {
    const std::size_t B = batch.size();
    const std::size_t F = batch[0]->next_features.size();
    std::vector<double> xn(B * F);
    for (std::size_t i = 0; i < B; ++i) std::copy_n(batch[i]->next_features.begin(), F, xn.begin() + i * F);
    ad::NoGradGuard ng;
    const auto Xn = input(std::move(xn), B);
    const auto qo = online_(Xn).values();
    const auto qt = target_(Xn).values();
    std::vector<double> y(B);
    for (std::size_t i = 0; i < B; ++i) {
      const auto& t = *batch[i];
      y[i] = t.reward;
      if (t.terminal) continue;
      const auto a = masked_argmax(qo.data() + i * n_options_, t.next_mask);
      if (a) y[i] += t.discount * qt[i * n_options_ + *a];
    }
    return y;
  }

  /// One Adam step on the mean Huber TD error; returns the loss.
  double update(const std::vector<const Transition*>& batch) {
    if (batch.empty()) throw std::invalid_argument("ddqn update: empty batch");
    const auto y = targets(batch);
    const std::size_t B = batch.size(), F = batch[0]->features.size();
    std::vector<double> x(B * F);
    std::vector<std::size_t> opts(B);
    for (std::size_t i = 0; i < B; ++i) {
      std::copy_n(batch[i]->features.begin(), F, x.begin() + i * F);
      opts[i] = batch[i]->option;
    }
    const auto q = ad::gather_cols(online_(input(std::move(x), B)), opts);
    const auto loss = ad::mean(ad::huber(ad::sub(q, ad::Tensor::from(B, 1, y)), cfg_.huber_delta));
    opt_->zero_grad();
    ad::backward(loss);
    opt_->step();
    ++updates_;
    return loss.item();
  }

  void sync_target() {
    ad::NamedParams from, to;
    online_.collect("q", from);
    target_.collect("q", to);
    ad::copy_values(from, to);
  }

  /// Sets the step counter, e.g. to place the epsilon schedule.
  void set_steps(std::size_t s) { steps_ = s; }

 private:
  ad::Tensor input(std::vector<double> x, std::size_t rows) const {
    const std::size_t F = x.size() / rows;
    if (!shift_.empty())
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < F; ++j) x[i * F + j] = (x[i * F + j] - shift_[j]) * scale_[j];
    return ad::Tensor::from(rows, F, std::move(x));
  }

  AgentConfig cfg_;
  std::size_t n_options_;
  ad::MLP online_, target_;
  std::optional<ad::Adam> opt_;
  ReplayBuffer buffer_;
  std::vector<double> shift_, scale_;
  std::size_t steps_ = 0;
  std::size_t updates_ = 0;
};

}  // namespace skillworld::planner
