#pragma once

// Finite ground MDPs over options under the expected-length model: option
// outcomes are a next-state distribution, an accumulated discounted reward
// and an expected duration tau, with discounting entering as gamma^tau.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skillworld/util/rng.hpp"

namespace skillworld::mdp {

using StateIndex = std::uint32_t;
using OptionIndex = std::uint32_t;

struct FiniteGroundMDP {
  std::size_t n_states = 0;
  std::size_t n_options = 0;
  double gamma = 0.9;
  std::vector<double> p0;                // [s]
  std::vector<double> transition;        // [s][o][s']
  std::vector<double> reward;            // [s][o]
  std::vector<double> duration;          // [s][o]
  std::vector<std::uint8_t> initiation;  // [s][o]

  static FiniteGroundMDP zeros(std::size_t n_states, std::size_t n_options, double gamma) {
    FiniteGroundMDP m;
    m.n_states = n_states;
    m.n_options = n_options;
    m.gamma = gamma;
    m.p0.assign(n_states, 0.0);
    m.transition.assign(n_states * n_options * n_states, 0.0);
    m.reward.assign(n_states * n_options, 0.0);
    m.duration.assign(n_states * n_options, 1.0);
    m.initiation.assign(n_states * n_options, 0);
    return m;
  }

  std::size_t so(std::size_t s, std::size_t o) const { return s * n_options + o; }

  double& T(std::size_t s, std::size_t o, std::size_t s2) {
    return transition[(s * n_options + o) * n_states + s2];
  }
  double T(std::size_t s, std::size_t o, std::size_t s2) const {
    return transition[(s * n_options + o) * n_states + s2];
  }
  std::span<double> row(std::size_t s, std::size_t o) {
    return {transition.data() + (s * n_options + o) * n_states, n_states};
  }
  std::span<const double> row(std::size_t s, std::size_t o) const {
    return {transition.data() + (s * n_options + o) * n_states, n_states};
  }

  double& R(std::size_t s, std::size_t o) { return reward[so(s, o)]; }
  double R(std::size_t s, std::size_t o) const { return reward[so(s, o)]; }
  double& tau(std::size_t s, std::size_t o) { return duration[so(s, o)]; }
  double tau(std::size_t s, std::size_t o) const { return duration[so(s, o)]; }

  bool available(std::size_t s, std::size_t o) const { return initiation[so(s, o)] != 0; }
  void set_available(std::size_t s, std::size_t o, bool a) { initiation[so(s, o)] = a ? 1 : 0; }

  bool any_available(std::size_t s) const {
    for (std::size_t o = 0; o < n_options; ++o)
      if (available(s, o)) return true;
    return false;
  }

  /// Throws std::invalid_argument naming the first violated invariant.
  void validate(double tol = 1e-12) const {
    if (n_states == 0 || n_options == 0) throw std::invalid_argument("mdp: empty state or option set");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("mdp: gamma must lie in [0,1)");
    if (p0.size() != n_states || transition.size() != n_states * n_options * n_states ||
        reward.size() != n_states * n_options || duration.size() != n_states * n_options ||
        initiation.size() != n_states * n_options)
      throw std::invalid_argument("mdp: table sizes inconsistent with n_states/n_options");
    double p0_total = 0.0;
    for (double p : p0) {
      if (p < 0.0) throw std::invalid_argument("mdp: negative p0 entry");
      p0_total += p;
    }
    if (std::abs(p0_total - 1.0) > tol) throw std::invalid_argument("mdp: p0 does not sum to 1");
    for (std::size_t s = 0; s < n_states; ++s) {
      for (std::size_t o = 0; o < n_options; ++o) {
        if (!available(s, o)) continue;
        double total = 0.0;
        for (double p : row(s, o)) {
          if (p < 0.0) throw std::invalid_argument("mdp: negative transition probability");
          total += p;
        }
        if (std::abs(total - 1.0) > tol)
          throw std::invalid_argument("mdp: transition row (" + std::to_string(s) + "," +
                                      std::to_string(o) + ") does not sum to 1");
        if (!(tau(s, o) >= 1.0))
          throw std::invalid_argument("mdp: duration below 1 at (" + std::to_string(s) + "," +
                                      std::to_string(o) + ")");
      }
    }
  }
};

/// Stochastic or deterministic option-selection table, one row per state.
struct TabularPolicy {
  std::size_t n_options = 0;
  std::vector<double> probs;  // [s][o]

  static TabularPolicy deterministic(std::span<const OptionIndex> choice, std::size_t n_options) {
    TabularPolicy p;
    p.n_options = n_options;
    p.probs.assign(choice.size() * n_options, 0.0);
    for (std::size_t s = 0; s < choice.size(); ++s) {
      if (choice[s] >= n_options) continue;  // no option (terminal)
      p.probs[s * n_options + choice[s]] = 1.0;
    }
    return p;
  }

  std::size_t n_states() const { return n_options ? probs.size() / n_options : 0; }
  double operator()(std::size_t s, std::size_t o) const { return probs[s * n_options + o]; }
};

inline void check_policy(const FiniteGroundMDP& mdp, const TabularPolicy& policy) {
  if (policy.n_options != mdp.n_options || policy.n_states() != mdp.n_states)
    throw std::invalid_argument("policy shape does not match mdp");
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    double total = 0.0;
    for (std::size_t o = 0; o < mdp.n_options; ++o) {
      const double p = policy(s, o);
      if (p < 0.0) throw std::invalid_argument("policy: negative probability");
      if (p > 0.0 && !mdp.available(s, o))
        throw std::invalid_argument("policy selects unavailable option " + std::to_string(o) +
                                    " at state " + std::to_string(s));
      total += p;
    }
    if (total != 0.0 && std::abs(total - 1.0) > 1e-12)
      throw std::invalid_argument("policy row " + std::to_string(s) + " does not sum to 1");
    if (total == 0.0 && mdp.any_available(s))
      throw std::invalid_argument("policy gives no option at non-terminal state " + std::to_string(s));
  }
}

struct PolicyEvaluation {
  std::vector<double> values;
  double residual = 0.0;  // ||v - Bellman(v)||_inf
  std::size_t sweeps = 0;
  bool converged = false;
};

/// One Bellman backup: (Bv)(s) = sum_o pi(o|s) [R(s,o) + gamma^tau(s,o) sum_s' T(s'|s,o) v(s')].
/// States with no option selected are terminal (value 0).
inline void bellman_backup(const FiniteGroundMDP& mdp, const TabularPolicy& policy,
                           std::span<const double> v, std::span<double> out) {
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    double acc = 0.0;
    for (std::size_t o = 0; o < mdp.n_options; ++o) {
      const double p = policy(s, o);
      if (p == 0.0) continue;
      double ev = 0.0;
      const auto r = mdp.row(s, o);
      for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2) ev += r[s2] * v[s2];
      acc += p * (mdp.R(s, o) + std::pow(mdp.gamma, mdp.tau(s, o)) * ev);
    }
    out[s] = acc;
  }
}

/// Iterative policy evaluation. Returns v with ||v - Bellman(v)||_inf <= tol
/// when converged; otherwise the last iterate and its residual.
inline PolicyEvaluation evaluate_policy(const FiniteGroundMDP& mdp, const TabularPolicy& policy,
                                        double tol = 1e-10, std::size_t max_sweeps = 1'000'000) {
  check_policy(mdp, policy);
  PolicyEvaluation result;
  std::vector<double> v(mdp.n_states, 0.0), bv(mdp.n_states, 0.0);
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    bellman_backup(mdp, policy, v, bv);
    double res = 0.0;
    for (std::size_t s = 0; s < mdp.n_states; ++s) res = std::max(res, std::abs(bv[s] - v[s]));
    result.sweeps = sweep + 1;
    result.residual = res;
    if (res <= tol) {
      result.converged = true;
      result.values = std::move(v);
      return result;
    }
    v.swap(bv);
  }
  result.values = std::move(v);
  return result;
}

// ---------------------------------------------------------------------------
// Future-state distributions

using StateSequence = std::vector<StateIndex>;

struct SequenceProbability {
  StateSequence states;
  double prob = 0.0;
};

/// Exact joint distribution over state sequences (s_0..s_t) for a fixed option
/// sequence. Entries are kept sorted lexicographically by sequence.
struct DistributionRollout {
  std::size_t horizon = 0;
  std::vector<OptionIndex> option_sequence;
  std::vector<SequenceProbability> joint;
  double pruned_mass = 0.0;

  double total() const {
    double t = 0.0;
    for (const auto& e : joint) t += e.prob;
    return t;
  }

  double probability(const StateSequence& seq) const {
    auto it = std::lower_bound(joint.begin(), joint.end(), seq,
                               [](const SequenceProbability& e, const StateSequence& k) {
                                 return e.states < k;
                               });
    return (it != joint.end() && it->states == seq) ? it->prob : 0.0;
  }

  /// Marginal over the last state.
  std::vector<double> marginal_last(std::size_t n_states) const {
    std::vector<double> m(n_states, 0.0);
    for (const auto& e : joint) m[e.states.back()] += e.prob;
    return m;
  }
};

inline constexpr double kPruneThreshold = 1e-15;

inline DistributionRollout initial_rollout(const FiniteGroundMDP& mdp) {
  DistributionRollout r;
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    if (mdp.p0[s] > 0.0) r.joint.push_back({{static_cast<StateIndex>(s)}, mdp.p0[s]});
  return r;
}

/// B_t -> B_{t+1}: appends s' with weight T(s'|s_t, o). Mass at states where o
/// is unavailable is dropped.
inline DistributionRollout extend_rollout(const FiniteGroundMDP& mdp, const DistributionRollout& prev,
                                          OptionIndex option) {
  if (option >= mdp.n_options) throw std::invalid_argument("rollout: option index out of range");
  DistributionRollout next;
  next.horizon = prev.horizon + 1;
  next.option_sequence = prev.option_sequence;
  next.option_sequence.push_back(option);
  next.pruned_mass = prev.pruned_mass;
  next.joint.reserve(prev.joint.size() * 2);
  for (const auto& e : prev.joint) {
    const StateIndex s = e.states.back();
    if (!mdp.available(s, option)) continue;
    const auto r = mdp.row(s, option);
    for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2) {
      if (r[s2] == 0.0) continue;
      const double p = e.prob * r[s2];
      if (p < kPruneThreshold) {
        next.pruned_mass += p;
        continue;
      }
      SequenceProbability ne{e.states, p};
      ne.states.push_back(static_cast<StateIndex>(s2));
      next.joint.push_back(std::move(ne));
    }
  }
  return next;
}

inline DistributionRollout rollout_distribution(const FiniteGroundMDP& mdp,
                                                std::span<const OptionIndex> options) {
  for (OptionIndex o : options) {
    if (o >= mdp.n_options) throw std::invalid_argument("rollout: option index out of range");
    bool anywhere = false;
    for (std::size_t s = 0; s < mdp.n_states && !anywhere; ++s) anywhere = mdp.available(s, o);
    if (!anywhere) throw std::invalid_argument("rollout: option " + std::to_string(o) + " has empty initiation set");
  }
  DistributionRollout r = initial_rollout(mdp);
  for (OptionIndex o : options) r = extend_rollout(mdp, r, o);
  return r;
}

/// max |a(seq) - b(seq)| over the union of supports.
inline double max_abs_difference(const DistributionRollout& a, const DistributionRollout& b) {
  double gap = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.joint.size() || j < b.joint.size()) {
    if (j == b.joint.size() || (i < a.joint.size() && a.joint[i].states < b.joint[j].states)) {
      gap = std::max(gap, std::abs(a.joint[i].prob));
      ++i;
    } else if (i == a.joint.size() || b.joint[j].states < a.joint[i].states) {
      gap = std::max(gap, std::abs(b.joint[j].prob));
      ++j;
    } else {
      gap = std::max(gap, std::abs(a.joint[i].prob - b.joint[j].prob));
      ++i;
      ++j;
    }
  }
  return gap;
}

// ---------------------------------------------------------------------------
// Monte-Carlo counterpart

struct SampledTransition {
  StateIndex next = 0;
  double reward = 0.0;
  double tau = 1.0;
};

inline SampledTransition sample_transition(const FiniteGroundMDP& mdp, std::size_t s, std::size_t o,
                                           Rng& rng) {
  if (s >= mdp.n_states || o >= mdp.n_options) throw std::invalid_argument("sample_transition: index out of range");
  if (!mdp.available(s, o))
    throw std::invalid_argument("sample_transition: option " + std::to_string(o) +
                                " unavailable at state " + std::to_string(s));
  const auto next = static_cast<StateIndex>(sample_discrete(rng, mdp.row(s, o)));
  return {next, mdp.R(s, o), mdp.tau(s, o)};
}

// ---------------------------------------------------------------------------
// JSON document

inline nlohmann::json to_json(const FiniteGroundMDP& mdp) {
  using nlohmann::json;
  json transition = json::array(), reward = json::array(), duration = json::array(),
       initiation = json::array();
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    json t_s = json::array(), r_s = json::array(), d_s = json::array(), i_s = json::array();
    for (std::size_t o = 0; o < mdp.n_options; ++o) {
      const auto r = mdp.row(s, o);
      t_s.push_back(std::vector<double>(r.begin(), r.end()));
      r_s.push_back(mdp.R(s, o));
      d_s.push_back(mdp.tau(s, o));
      i_s.push_back(mdp.available(s, o));
    }
    transition.push_back(std::move(t_s));
    reward.push_back(std::move(r_s));
    duration.push_back(std::move(d_s));
    initiation.push_back(std::move(i_s));
  }
  return json{{"n_states", mdp.n_states}, {"n_options", mdp.n_options}, {"gamma", mdp.gamma},
              {"p0", mdp.p0},             {"transition", transition},   {"reward", reward},
              {"duration", duration},     {"initiation", initiation}};
}

inline FiniteGroundMDP from_json(const nlohmann::json& j) {
  const auto n = j.at("n_states").get<std::size_t>();
  const auto k = j.at("n_options").get<std::size_t>();
  FiniteGroundMDP m = FiniteGroundMDP::zeros(n, k, j.at("gamma").get<double>());
  m.p0 = j.at("p0").get<std::vector<double>>();
  if (m.p0.size() != n) throw std::invalid_argument("mdp json: p0 length mismatch");
  const auto& tr = j.at("transition");
  const auto& rw = j.at("reward");
  const auto& du = j.at("duration");
  const auto& in = j.at("initiation");
  if (tr.size() != n || rw.size() != n || du.size() != n || in.size() != n)
    throw std::invalid_argument("mdp json: per-state tables have wrong length");
  for (std::size_t s = 0; s < n; ++s) {
    if (tr[s].size() != k || rw[s].size() != k || du[s].size() != k || in[s].size() != k)
      throw std::invalid_argument("mdp json: per-option tables have wrong length");
    for (std::size_t o = 0; o < k; ++o) {
      const auto r = tr[s][o].get<std::vector<double>>();
      if (r.size() != n) throw std::invalid_argument("mdp json: transition row length mismatch");
      std::copy(r.begin(), r.end(), m.row(s, o).begin());
      m.R(s, o) = rw[s][o].get<double>();
      m.tau(s, o) = du[s][o].get<double>();
      m.set_available(s, o, in[s][o].get<bool>());
    }
  }
  return m;
}

}  // namespace skillworld::mdp
