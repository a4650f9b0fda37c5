#pragma once

// Imagination rollouts, real-environment episodes and the planning loop:
// make the task model, then alternate real rollouts with goal-head refreshes
// and agent training in imagination.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skillworld/model/data.hpp"
#include "skillworld/model/model.hpp"
#include "skillworld/planner/agent.hpp"
#include "skillworld/planner/env.hpp"
#include "skillworld/planner/task.hpp"
#include "skillworld/util/csv.hpp"
#include "skillworld/util/rng.hpp"

namespace skillworld::planner {

struct ImaginationConfig {
  std::size_t lanes = 16;       // rollouts advanced together
  std::size_t max_length = 64;  // options per imagined episode
};

struct ImaginationStats {
  std::size_t steps = 0;
  std::size_t episodes = 0;
  std::size_t goal_terminations = 0;
  std::size_t truncated_no_option = 0;  // rollouts cut because nothing was available
};

struct ImaginedStep {
  AbstractState state;
  std::size_t option = 0;
  double reward = 0.0;  // scaled task reward
  double discount = 1.0;
  bool terminal = false;
};

struct ImaginedTrajectory {
  std::vector<ImaginedStep> steps;
  bool truncated_no_option = false;
};

/// Single trajectory from start: ends at the goal (absorbing step), at
/// max_len options, or when no option is predicted available.
inline ImaginedTrajectory imagine_rollout(const TaskModel& task, const Agent& agent, const AbstractState& start,
                                          std::size_t max_len, double eps, double gamma, Rng& rng) {
  const auto& m = task.base();
  const std::size_t O = m.n_options();
  ImaginedTrajectory out;
  AbstractState s = start;
  for (std::size_t t = 0; t < max_len; ++t) {
    const auto mask = task.mask(s.z);
    const auto q = agent.q_values(features(s, O), 1);
    const auto o = agent.act(q.data(), mask, eps, rng);
    if (!o) {
      out.truncated_no_option = true;
      break;
    }
    const auto [r, tau] = m.reward_duration(s.z_prev, s.o_prev, s.z, *o);
    const bool goal = task.in_goal(s.z);
    out.steps.push_back({s, *o, task.config().reward_scale * task.reward(s, r), option_discount(gamma, tau), goal});
    if (goal) break;
    auto zn = m.sample_next(s.z, *o, rng);
    s = {s.z, *o, std::move(zn)};
  }
  return out;
}

/// Advances several imagined episodes in lockstep, feeding each transition
/// to the agent. Lanes persist across run() calls.
class Imaginer {
 public:
  Imaginer(const TaskModel& task, ImaginationConfig cfg, double gamma) : task_(task), cfg_(cfg), gamma_(gamma) {
    if (cfg_.lanes == 0 || cfg_.max_length == 0)
      throw std::invalid_argument("imagination: lanes and max_length must be positive");
  }

  ImaginationStats run(Agent& agent, const std::vector<AbstractState>& starts, std::size_t n_steps, Rng& rng) {
    if (starts.empty()) throw std::invalid_argument("imagination: start-state buffer is empty");
    const auto& m = task_.base();
    const std::size_t O = m.n_options(), dz = m.d_z();
    ImaginationStats st;
    lanes_.resize(cfg_.lanes);
    for (auto& l : lanes_)
      if (!l.active) reset(l, starts, rng);
    while (st.steps < n_steps) {
      const std::size_t L = lanes_.size();
      std::vector<double> feats;
      for (const auto& l : lanes_) {
        const auto f = features(l.s, O);
        feats.insert(feats.end(), f.begin(), f.end());
      }
      const auto q = agent.q_values(feats, L);
      const double eps = agent.epsilon();
      std::vector<std::size_t> go;  // lanes that act this round
      std::vector<std::size_t> opts;
      for (std::size_t i = 0; i < L; ++i) {
        const auto o = agent.act(q.data() + i * O, lanes_[i].mask, eps, rng);
        if (!o) {
          ++st.truncated_no_option;
          ++st.episodes;
          reset(lanes_[i], starts, rng);
          continue;
        }
        go.push_back(i);
        opts.push_back(*o);
      }
      if (go.empty()) continue;
      const std::size_t B = go.size();
      std::vector<double> zp, z;
      std::vector<std::size_t> op;
      for (auto i : go) {
        const auto& s = lanes_[i].s;
        zp.insert(zp.end(), s.z_prev.begin(), s.z_prev.end());
        z.insert(z.end(), s.z.begin(), s.z.end());
        op.push_back(s.o_prev);
      }
      std::vector<double> r, tau;
      m.reward_duration_batch(zp, op, z, opts, r, tau);
      const auto goal = task_.in_goal_batch(z, B);
      const auto zn = m.sample_next_batch(z, opts, rng);
      const auto next_masks = task_.mask_batch(zn, B);
      for (std::size_t b = 0; b < B && st.steps < n_steps; ++b) {
        Lane& l = lanes_[go[b]];
        AbstractState next{l.s.z, opts[b], std::vector<double>(zn.begin() + static_cast<std::ptrdiff_t>(b * dz),
                                                               zn.begin() + static_cast<std::ptrdiff_t>((b + 1) * dz))};
        Transition t;
        t.features = features(l.s, O);
        t.option = opts[b];
        t.reward = task_.config().reward_scale * (r[b] + (goal[b] ? task_.config().r_task : 0.0));
        t.discount = option_discount(gamma_, tau[b]);
        t.next_features = features(next, O);
        t.next_mask = next_masks[b];
        t.terminal = goal[b];
        agent.observe(std::move(t), rng);
        ++st.steps;
        ++l.length;
        if (goal[b] || l.length >= cfg_.max_length) {
          st.goal_terminations += goal[b];
          ++st.episodes;
          reset(l, starts, rng);
        } else {
          l.s = std::move(next);
          l.mask = next_masks[b];
        }
      }
    }
    return st;
  }

 private:
  struct Lane {
    AbstractState s;
    Mask mask;
    std::size_t length = 0;
    bool active = false;
  };

  void reset(Lane& l, const std::vector<AbstractState>& starts, Rng& rng) {
    l.s = starts[uniform_index(rng, starts.size())];
    l.mask = task_.mask(l.s.z);
    l.length = 0;
    l.active = true;
  }

  const TaskModel& task_;
  ImaginationConfig cfg_;
  double gamma_;
  std::vector<Lane> lanes_;
};

// ---------------------------------------------------------------------------
// Real environment

struct EpisodeResult {
  bool success = false;
  bool stuck = false;  // no executable option
  double ret = 0.0;    // sum of option rewards, plus r_task on success
  std::size_t options = 0;
  std::vector<AbstractState> visited;  // abstract state before each decision
  std::vector<std::pair<std::vector<double>, bool>> labeled;  // (z, in goal)
};

/// Acts in the real environment from its start state. Options are chosen
/// among those executable in the ground state; the learned transition head is
/// never used here.
inline EpisodeResult run_real_episode(const OptionEnv& env, const model::AbstractModel& m, const Agent& agent,
                                      double eps, std::size_t cap, double r_task, Rng& rng) {
  const std::size_t O = m.n_options();
  EpisodeResult res;
  std::vector<double> g = env.start_state();
  AbstractState s = initial_abstract_state(m, m.encode_one(env.observation(g)));
  while (true) {
    const bool goal = env.in_goal(g);
    res.labeled.emplace_back(s.z, goal);
    if (goal) {
      res.success = true;
      res.ret += r_task;
      break;
    }
    if (res.options >= cap) break;
    const auto mask = env.initiation(g);
    const auto q = agent.q_values(features(s, O), 1);
    const auto o = agent.act(q.data(), mask, eps, rng);
    if (!o) {
      res.stuck = true;
      break;
    }
    res.visited.push_back(s);
    const auto out = env.execute(g, *o, rng);
    res.ret += out.r_gamma;
    ++res.options;
    g = out.next;
    s = {s.z, *o, m.encode_one(env.observation(g))};
  }
  return res;
}

struct EvalResult {
  double success_rate = 0.0;
  double mean_return = 0.0;
  std::size_t stuck = 0;
};

inline EvalResult evaluate_success(const OptionEnv& env, const model::AbstractModel& m, const Agent& agent,
                                   std::size_t n_episodes, std::size_t cap, double r_task, Rng& rng,
                                   std::optional<double> eps = std::nullopt) {
  if (n_episodes == 0) throw std::invalid_argument("evaluate_success: n_episodes must be positive");
  EvalResult r;
  const double e = eps.value_or(agent.config().eval_eps);
  for (std::size_t i = 0; i < n_episodes; ++i) {
    const auto ep = run_real_episode(env, m, agent, e, cap, r_task, rng);
    r.success_rate += ep.success;
    r.mean_return += ep.ret;
    r.stuck += ep.stuck;
  }
  r.success_rate /= static_cast<double>(n_episodes);
  r.mean_return /= static_cast<double>(n_episodes);
  return r;
}

/// Uniformly random executable options, for the never-trained baseline.
inline EvalResult evaluate_random(const OptionEnv& env, std::size_t n_episodes, std::size_t cap, double r_task,
                                  Rng& rng) {
  if (n_episodes == 0) throw std::invalid_argument("evaluate_random: n_episodes must be positive");
  EvalResult r;
  for (std::size_t i = 0; i < n_episodes; ++i) {
    auto g = env.start_state();
    double ret = 0.0;
    bool success = false;
    for (std::size_t t = 0;; ++t) {
      if (env.in_goal(g)) {
        success = true;
        ret += r_task;
        break;
      }
      if (t >= cap) break;
      const auto mask = env.initiation(g);
      std::vector<std::size_t> avail;
      for (std::size_t o = 0; o < mask.size(); ++o)
        if (mask[o]) avail.push_back(o);
      if (avail.empty()) {
        ++r.stuck;
        break;
      }
      const auto out = env.execute(g, avail[uniform_index(rng, avail.size())], rng);
      ret += out.r_gamma;
      g = out.next;
    }
    r.success_rate += success;
    r.mean_return += ret;
  }
  r.success_rate /= static_cast<double>(n_episodes);
  r.mean_return /= static_cast<double>(n_episodes);
  return r;
}

// ---------------------------------------------------------------------------
// Planning loop

struct PlanConfig {
  std::size_t real_steps = 20000;          // real option executions after pretraining
  std::size_t refresh_every = 1000;        // H: real steps between refreshes
  std::size_t imagination_steps = 20000;   // agent steps per refresh
  std::size_t episode_cap = 100;           // options per real episode
  std::size_t eval_episodes = 10;
  std::size_t pretrain_offset = 0;         // added to ground_env_steps in the curve
  double eps_decay_fraction = 0.3;         // of all imagined steps
  bool record_wallclock = false;
  TaskConfig task;
  AgentConfig agent;
  ImaginationConfig imagination;

  void validate() const {
    if (refresh_every == 0 || episode_cap == 0 || eval_episodes == 0)
      throw std::invalid_argument("plan config: refresh_every, episode_cap and eval_episodes must be positive");
    if (!(eps_decay_fraction >= 0.0 && eps_decay_fraction <= 1.0))
      throw std::invalid_argument("plan config: eps_decay_fraction must lie in [0, 1]");
    task.validate();
    agent.validate();
  }

  std::size_t refreshes() const { return (real_steps + refresh_every - 1) / refresh_every; }

  nlohmann::json to_json() const {
    return {{"real_steps", real_steps},
            {"refresh_every", refresh_every},
            {"imagination_steps", imagination_steps},
            {"episode_cap", episode_cap},
            {"eval_episodes", eval_episodes},
            {"pretrain_offset", pretrain_offset},
            {"eps_decay_fraction", eps_decay_fraction},
            {"imagination_lanes", imagination.lanes},
            {"max_rollout_length", imagination.max_length},
            {"task", task.to_json()},
            {"agent", agent.to_json()}};
  }
};

struct CurvePoint {
  std::size_t ground_env_steps = 0;
  double success_rate = 0.0;
  double mean_return = 0.0;
  double epsilon = 0.0;
  double wallclock_s = 0.0;
};

inline void write_curves(const std::vector<CurvePoint>& curve, const std::string& path) {
  csv::Writer w(path);
  w.header({"ground_env_steps", "success_rate", "mean_return", "epsilon", "wallclock_s"});
  for (const auto& c : curve)
    w.row(std::vector<double>{static_cast<double>(c.ground_env_steps), c.success_rate, c.mean_return, c.epsilon,
                              c.wallclock_s});
}

struct PlanStats {
  std::size_t real_steps = 0;
  std::size_t real_episodes = 0;
  std::size_t stuck_resets = 0;
  std::size_t imagined_steps = 0;
  std::size_t imagined_goal_terminations = 0;
  std::size_t truncated_no_option = 0;
  double goal_radius = 0.0;
  bool classifier_active = false;
};

struct PlanResult {
  std::vector<CurvePoint> curve;
  PlanStats stats;
  std::optional<Agent> agent;  // the trained task policy
};

/// Start states for imagination from a training set: every record's
/// abstract state (z_prev, o_prev, z).
inline std::vector<AbstractState> start_states_from(const model::AbstractModel& m, const model::TrainingSet& ts) {
  std::vector<std::vector<double>> z(ts.size());
  std::vector<double> obs(ts.obs_dim);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    ts.observe(ts.records[i].ground, obs.data());
    z[i] = m.encode_one(obs);
  }
  std::vector<AbstractState> out;
  out.reserve(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const auto& r = ts.records[i];
    if (r.prev >= 0)
      out.push_back({z[static_cast<std::size_t>(r.prev)], ts.records[static_cast<std::size_t>(r.prev)].option, z[i]});
    else
      out.push_back(initial_abstract_state(m, z[i]));
  }
  return out;
}

/// Mean and inverse standard deviation of each feature over the start
/// buffer; constant features keep unit scale.
inline std::pair<std::vector<double>, std::vector<double>> feature_scaling(const std::vector<AbstractState>& starts,
                                                                           std::size_t n_options) {
  const std::size_t F = features(starts.at(0), n_options).size();
  std::vector<double> mean(F, 0.0), sq(F, 0.0);
  for (const auto& s : starts) {
    const auto f = features(s, n_options);
    for (std::size_t j = 0; j < F; ++j) {
      mean[j] += f[j];
      sq[j] += f[j] * f[j];
    }
  }
  const double n = static_cast<double>(starts.size());
  std::vector<double> scale(F);
  for (std::size_t j = 0; j < F; ++j) {
    mean[j] /= n;
    const double var = std::max(0.0, sq[j] / n - mean[j] * mean[j]);
    scale[j] = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
  }
  return {mean, scale};
}

/// The planning loop on a pretrained model. Only the goal head is trained
/// here; the rest of the model stays fixed.
inline PlanResult run_algorithm1(const OptionEnv& env, const model::AbstractModel& m,
                                 std::vector<AbstractState> starts, const PlanConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (env.n_options() != m.n_options() || env.obs_dim() != m.config().obs_dim)
    throw std::invalid_argument("run_algorithm1: model does not match the environment");
  const auto t0 = std::chrono::steady_clock::now();
  auto task_rng = make_stream(seed, "task");
  auto agent_rng = make_stream(seed, "agent-init");
  auto imagine_rng = make_stream(seed, "imagination");
  auto real_rng = make_stream(seed, "real");
  auto eval_rng = make_stream(seed, "eval");

  if (env.in_goal(env.start_state())) throw std::invalid_argument("run_algorithm1: start state is already in the goal");
  TaskModel task = make_task_model(m, env, cfg.task, task_rng);
  AgentConfig acfg = cfg.agent;
  acfg.eps_decay_steps = static_cast<std::size_t>(cfg.eps_decay_fraction *
                                                  static_cast<double>(cfg.refreshes() * cfg.imagination_steps));
  Agent agent(feature_dim(m), m.n_options(), acfg, agent_rng);
  if (!starts.empty()) {
    auto [shift, scale] = feature_scaling(starts, m.n_options());
    agent.set_input_scaling(std::move(shift), std::move(scale));
  }
  Imaginer imaginer(task, cfg.imagination, env.gamma());

  PlanResult res;
  res.stats.goal_radius = task.radius();
  auto record = [&](std::size_t steps) {
    const auto ev = evaluate_success(env, m, agent, cfg.eval_episodes, cfg.episode_cap, cfg.task.r_task, eval_rng);
    CurvePoint c{cfg.pretrain_offset + steps, ev.success_rate, ev.mean_return, agent.epsilon(), 0.0};
    if (cfg.record_wallclock)
      c.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.curve.push_back(c);
  };
  record(0);

  std::vector<std::pair<std::vector<double>, bool>> labeled;
  std::size_t since_refresh = 0;
  while (res.stats.real_steps < cfg.real_steps) {
    // L: one real episode with the current exploration rate.
    auto ep = run_real_episode(env, m, agent, agent.epsilon(), cfg.episode_cap, cfg.task.r_task, real_rng);
    res.stats.real_steps += ep.options;
    since_refresh += ep.options;
    ++res.stats.real_episodes;
    res.stats.stuck_resets += ep.stuck;
    for (auto& s : ep.visited) starts.push_back(std::move(s));
    for (auto& l : ep.labeled) labeled.push_back(std::move(l));
    if (ep.options == 0 && !ep.success) {
      // The start state admits no option; nothing can be learned from reality.
      throw std::runtime_error("run_algorithm1: no executable option at the start state");
    }
    if (since_refresh >= cfg.refresh_every || res.stats.real_steps >= cfg.real_steps) {
      since_refresh = 0;
      task.refresh(labeled, task_rng);
      const auto st = imaginer.run(agent, starts, cfg.imagination_steps, imagine_rng);
      res.stats.imagined_steps += st.steps;
      res.stats.imagined_goal_terminations += st.goal_terminations;
      res.stats.truncated_no_option += st.truncated_no_option;
      record(res.stats.real_steps);
    }
  }
  res.stats.classifier_active = task.classifier_active();
  res.agent.emplace(std::move(agent));
  return res;
}

}  // namespace skillworld::planner
