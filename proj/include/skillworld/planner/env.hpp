#pragma once

// Option-level environments for planning: a common interface, a Pinball
// adapter with a circular goal, and a small deterministic line world.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "skillworld/model/data.hpp"
#include "skillworld/pinball/dataset.hpp"
#include "skillworld/pinball/env.hpp"
#include "skillworld/util/rng.hpp"

namespace skillworld::planner {

struct OptionResult {
  std::vector<double> next;
  double r_gamma = 0.0;
  double tau = 1.0;
};

class OptionEnv {
 public:
  virtual ~OptionEnv() = default;
  virtual std::size_t n_options() const = 0;
  virtual std::size_t obs_dim() const = 0;
  virtual double gamma() const = 0;
  virtual std::vector<double> start_state() const = 0;
  virtual void observe(const std::vector<double>& ground, double* out) const = 0;
  virtual std::vector<std::uint8_t> initiation(const std::vector<double>& ground) const = 0;
  virtual OptionResult execute(const std::vector<double>& ground, std::size_t option, Rng& rng) const = 0;
  virtual bool in_goal(const std::vector<double>& ground) const = 0;
  /// Ground states drawn from the goal region, for calibration.
  virtual std::vector<std::vector<double>> goal_samples(std::size_t n, Rng& rng) const = 0;

  std::vector<double> observation(const std::vector<double>& ground) const {
    std::vector<double> o(obs_dim());
    observe(ground, o.data());
    return o;
  }
};

/// Pinball with a fixed start and a disc-shaped goal in position space.
class PinballGoalEnv : public OptionEnv {
 public:
  PinballGoalEnv(const pinball::Pinball& env, pinball::Vec2 goal, double goal_radius, pinball::Vec2 start,
                 pinball::ObsMode mode = pinball::ObsMode::kState)
      : env_(env), goal_(goal), radius_(goal_radius), start_(start), mode_(mode) {
    if (!(goal_radius > 0.0)) throw std::invalid_argument("goal radius must be positive");
    if (!env_.is_free(start)) throw std::invalid_argument("start position is not free");
    if (!env_.is_free(goal)) throw std::invalid_argument("goal position is not free");
  }

  std::size_t n_options() const override { return pinball::kNumOptions; }
  std::size_t obs_dim() const override { return pinball::obs_dim(mode_); }
  double gamma() const override { return env_.config().gamma; }
  std::vector<double> start_state() const override { return {start_.x, start_.y, 0.0, 0.0}; }

  void observe(const std::vector<double>& g, double* out) const override {
    const auto o = pinball::observe(env_, to_state(g), mode_);
    std::copy(o.begin(), o.end(), out);
  }

  std::vector<std::uint8_t> initiation(const std::vector<double>& g) const override {
    const auto i = env_.initiation_set(to_state(g));
    return {i.begin(), i.end()};
  }

  OptionResult execute(const std::vector<double>& g, std::size_t o, Rng& rng) const override {
    const auto out = env_.execute_option(to_state(g), o, rng);
    const auto n = out.next.as_array();
    return {{n.begin(), n.end()}, out.r_gamma, static_cast<double>(out.tau)};
  }

  bool in_goal(const std::vector<double>& g) const override {
    return std::hypot(g[0] - goal_.x, g[1] - goal_.y) <= radius_;
  }

  /// Uniform free positions in the goal disc; velocities uniform in [-1, 1].
  std::vector<std::vector<double>> goal_samples(std::size_t n, Rng& rng) const override {
    std::vector<std::vector<double>> out;
    std::size_t attempts = 0;
    while (out.size() < n) {
      if (++attempts > 1000 * (n + 1)) throw std::runtime_error("goal region has no free positions");
      const double r = radius_ * std::sqrt(uniform01(rng)), a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      const pinball::Vec2 p{goal_.x + r * std::cos(a), goal_.y + r * std::sin(a)};
      if (!env_.is_free(p)) continue;
      out.push_back({p.x, p.y, uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0)});
    }
    return out;
  }

  const pinball::Pinball& pinball() const { return env_; }
  pinball::Vec2 goal() const { return goal_; }
  double goal_radius() const { return radius_; }

 private:
  static pinball::PinballState to_state(const std::vector<double>& g) { return {g[0], g[1], g[2], g[3]}; }

  const pinball::Pinball& env_;
  pinball::Vec2 goal_;
  double radius_;
  pinball::Vec2 start_;
  pinball::ObsMode mode_;
};

/// Positions 0..n-1 on a line; option 0 moves left, option 1 moves right.
/// Moving off either end is unavailable. Each option costs 1 and lasts 1 step.
class LineWorld : public OptionEnv {
 public:
  explicit LineWorld(std::size_t n_positions = 3, std::size_t start = 0, std::size_t goal = 2, double gamma = 0.99)
      : n_(n_positions), start_(start), goal_(goal), gamma_(gamma) {
    if (n_ < 2 || start_ >= n_ || goal_ >= n_) throw std::invalid_argument("line world: bad positions");
  }

  std::size_t n_options() const override { return 2; }
  std::size_t obs_dim() const override { return 1; }
  double gamma() const override { return gamma_; }
  std::vector<double> start_state() const override { return {static_cast<double>(start_)}; }
  void observe(const std::vector<double>& g, double* out) const override {
    out[0] = g[0] / static_cast<double>(n_ - 1);
  }
  std::vector<std::uint8_t> initiation(const std::vector<double>& g) const override {
    const auto p = static_cast<std::size_t>(g[0]);
    return {static_cast<std::uint8_t>(p > 0), static_cast<std::uint8_t>(p + 1 < n_)};
  }
  OptionResult execute(const std::vector<double>& g, std::size_t o, Rng&) const override {
    if (o >= 2 || !initiation(g)[o]) throw std::invalid_argument("line world: option not available");
    return {{g[0] + (o == 1 ? 1.0 : -1.0)}, -1.0, 1.0};
  }
  bool in_goal(const std::vector<double>& g) const override { return static_cast<std::size_t>(g[0]) == goal_; }
  std::vector<std::vector<double>> goal_samples(std::size_t n, Rng&) const override {
    return std::vector<std::vector<double>>(n, {static_cast<double>(goal_)});
  }
  std::size_t n_positions() const { return n_; }

 private:
  std::size_t n_, start_, goal_;
  double gamma_;
};

/// Uniform random-option data from uniformly random start states; each
/// episode runs episode_len options.
inline model::TrainingSet collect_line_world(const LineWorld& env, std::size_t n, std::size_t episode_len,
                                             std::uint64_t seed) {
  model::TrainingSet ts;
  ts.obs_dim = 1;
  ts.n_options = 2;
  const std::size_t n_pos = env.n_positions();
  ts.observe = [n_pos](const std::vector<double>& g, double* out) { out[0] = g[0] / static_cast<double>(n_pos - 1); };
  auto rng = make_stream(seed, "line-collect");
  std::vector<double> s;
  std::size_t step = episode_len;
  while (ts.records.size() < n) {
    if (step >= episode_len) {
      s = {static_cast<double>(uniform_index(rng, n_pos))};
      step = 0;
    }
    const auto init = env.initiation(s);
    std::vector<std::size_t> avail;
    for (std::size_t o = 0; o < 2; ++o)
      if (init[o]) avail.push_back(o);
    const std::size_t o = avail[uniform_index(rng, avail.size())];
    const auto out = env.execute(s, o, rng);
    model::Record r;
    r.ground = s;
    r.option = o;
    r.r_gamma = out.r_gamma;
    r.next_ground = out.next;
    r.tau = out.tau;
    r.initiation = init;
    r.prev = step > 0 ? static_cast<long>(ts.records.size()) - 1 : -1;
    ts.records.push_back(std::move(r));
    s = out.next;
    ++step;
  }
  return ts;
}

}  // namespace skillworld::planner
