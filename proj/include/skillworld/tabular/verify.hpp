#pragma once

// Numerical certificates for grounded abstract models: exact rollout gaps,
// value preservation, the value-loss bound, grounding-error propagation and
// the strong-subgoal partition.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "skillworld/core/mdp.hpp"
#include "skillworld/tabular/abstraction.hpp"
#include "skillworld/util/rng.hpp"

namespace skillworld::tabular {

// ---------------------------------------------------------------------------
// Rollout equivalence: B_t against B-bar_t over every option sequence up to a horizon.

struct RolloutGap {
  double max_gap = 0.0;
  std::vector<OptionIndex> witness;  // sequence attaining max_gap
  std::size_t sequences = 0;
  double pruned_mass = 0.0;
};

/// Walks the option-sequence tree depth first, extending both distributions
/// one option at a time. Stops early once stop_above is exceeded.
inline RolloutGap max_rollout_gap(const GroundedAbstractModel& model, std::size_t horizon,
                                  double stop_above = std::numeric_limits<double>::infinity()) {
  const auto& mdp = model.ground;
  RolloutGap out;
  std::vector<OptionIndex> seq;
  bool stop = false;

  auto visit = [&](auto&& self, const mdp::DistributionRollout& b, const detail::GroundedRollout& gb) -> void {
    const double gap = mdp::max_abs_difference(b, detail::marginalize(gb));
    ++out.sequences;
    out.pruned_mass = std::max(out.pruned_mass, b.pruned_mass);
    if (gap > out.max_gap) {
      out.max_gap = gap;
      out.witness = seq;
    }
    if (out.max_gap > stop_above) {
      stop = true;
      return;
    }
    if (seq.size() == horizon) return;
    for (std::size_t o = 0; o < mdp.n_options && !stop; ++o) {
      const auto oi = static_cast<OptionIndex>(o);
      seq.push_back(oi);
      self(self, mdp::extend_rollout(mdp, b, oi), detail::grounded_extend(model, gb, oi));
      seq.pop_back();
    }
  };
  visit(visit, mdp::initial_rollout(mdp), detail::grounded_initial(model));
  return out;
}

// ---------------------------------------------------------------------------
// Exact policy values through a dense solve of (I - P) v = r.

struct ExactValues {
  std::vector<double> v;
  std::vector<double> q;  // [s][o], NaN where unavailable
};

inline ExactValues solve_policy_values(const FiniteGroundMDP& mdp, const mdp::TabularPolicy& policy) {
  mdp::check_policy(mdp, policy);
  const std::size_t n = mdp.n_states, k = mdp.n_options;
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < k; ++o) {
      const double p = policy(s, o);
      if (p == 0.0) continue;
      const double disc = std::pow(mdp.gamma, mdp.tau(s, o));
      b[static_cast<Eigen::Index>(s)] += p * mdp.R(s, o);
      const auto r = mdp.row(s, o);
      for (std::size_t s2 = 0; s2 < n; ++s2)
        A(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s2)) -= p * disc * r[s2];
    }
  const Eigen::VectorXd v = A.partialPivLu().solve(b);
  ExactValues out;
  out.v.assign(v.data(), v.data() + n);
  out.q.assign(n * k, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < k; ++o) {
      if (!mdp.available(s, o)) continue;
      double ev = 0.0;
      const auto r = mdp.row(s, o);
      for (std::size_t s2 = 0; s2 < n; ++s2) ev += r[s2] * out.v[s2];
      out.q[s * k + o] = mdp.R(s, o) + std::pow(mdp.gamma, mdp.tau(s, o)) * ev;
    }
  return out;
}

/// Ground process that runs an abstract-state policy: its states are pairs
/// (tuple, s) with s in supp G_tuple, and the tuple is advanced with phi(s').
struct LiftedGround {
  FiniteGroundMDP mdp;
  mdp::TabularPolicy policy;
  std::vector<std::pair<std::uint32_t, StateIndex>> pairs;  // product index -> (tuple, s)

  std::size_t index(std::uint32_t t, StateIndex s) const {
    auto it = std::lower_bound(pairs.begin(), pairs.end(), std::make_pair(t, s));
    if (it == pairs.end() || *it != std::make_pair(t, s)) return SIZE_MAX;
    return static_cast<std::size_t>(it - pairs.begin());
  }
};

inline LiftedGround lift_policy(const GroundedAbstractModel& model, const mdp::TabularPolicy& abstract_policy) {
  const auto& g = model.ground;
  const std::size_t n = g.n_states, k = g.n_options, nt = model.n_tuples();
  if (abstract_policy.n_states() != nt || abstract_policy.n_options != k)
    throw std::invalid_argument("lift_policy: policy shape does not match abstract model");

  LiftedGround out;
  // Closed set: every (t, s) with G_t(s) > 0 (successors stay in this set).
  for (std::size_t t = 0; t < nt; ++t) {
    const auto gt = model.G(t);
    for (std::size_t s = 0; s < n; ++s)
      if (gt[s] > 0.0) out.pairs.emplace_back(static_cast<std::uint32_t>(t), static_cast<StateIndex>(s));
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  const std::size_t np = out.pairs.size();
  out.mdp = FiniteGroundMDP::zeros(np, k, g.gamma);
  out.mdp.p0[0] = 1.0;  // unused by evaluation
  out.policy.n_options = k;
  out.policy.probs.assign(np * k, 0.0);

  for (std::size_t i = 0; i < np; ++i) {
    const auto [t, s] = out.pairs[i];
    const auto& tup = model.abstract_states[t];
    double mass = 0.0;
    for (std::size_t o = 0; o < k; ++o) {
      if (!g.available(s, o) || !model.abstract.available(t, o)) continue;
      out.mdp.set_available(i, o, true);
      out.mdp.R(i, o) = g.R(s, o);
      out.mdp.tau(i, o) = g.tau(s, o);
      const auto row = g.row(s, o);
      for (std::size_t s2 = 0; s2 < n; ++s2) {
        if (row[s2] == 0.0) continue;
        const std::size_t t2 = model.tuple_index({tup.z, static_cast<std::uint32_t>(o), model.phi.phi[s2]});
        const std::size_t j = t2 == SIZE_MAX ? SIZE_MAX : out.index(static_cast<std::uint32_t>(t2), static_cast<StateIndex>(s2));
        if (j == SIZE_MAX) throw std::logic_error("lift_policy: successor outside the grounded support");
        out.mdp.T(i, o, j) += row[s2];
      }
      out.policy.probs[i * k + o] = abstract_policy(t, o);
      mass += abstract_policy(t, o);
    }
    if (mass > 0.0) {
      for (std::size_t o = 0; o < k; ++o) out.policy.probs[i * k + o] /= mass;
    } else {
      // The selected options are unavailable at this ground state: terminal.
      for (std::size_t o = 0; o < k; ++o) out.mdp.set_available(i, o, false);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Value preservation

struct ValuePreservationReport {
  double max_residual = 0.0;
  std::size_t worst_tuple = 0;
  std::vector<double> abstract_values;
  std::vector<double> grounded_values;  // sum_s G(s) v_ground(tuple, s)
  bool passed = false;
};

inline ValuePreservationReport check_value_preservation(const GroundedAbstractModel& model,
                                                        const mdp::TabularPolicy& abstract_policy,
                                                        double tol = 1e-8) {
  const auto abs_v = solve_policy_values(model.abstract, abstract_policy);
  const auto lifted = lift_policy(model, abstract_policy);
  const auto ground_v = solve_policy_values(lifted.mdp, lifted.policy);

  ValuePreservationReport rep;
  rep.abstract_values = abs_v.v;
  rep.grounded_values.assign(model.n_tuples(), 0.0);
  for (std::size_t i = 0; i < lifted.pairs.size(); ++i) {
    const auto [t, s] = lifted.pairs[i];
    rep.grounded_values[t] += model.G(t)[s] * ground_v.v[i];
  }
  for (std::size_t t = 0; t < model.n_tuples(); ++t) {
    const double r = std::abs(rep.abstract_values[t] - rep.grounded_values[t]);
    if (r > rep.max_residual) {
      rep.max_residual = r;
      rep.worst_tuple = t;
    }
  }
  rep.passed = rep.max_residual <= tol;
  return rep;
}

/// Deterministic policy over abstract states, uniform over available options.
inline mdp::TabularPolicy random_deterministic_policy(const FiniteGroundMDP& m, Rng& rng) {
  std::vector<OptionIndex> choice(m.n_states, static_cast<OptionIndex>(m.n_options));
  std::vector<std::size_t> avail;
  for (std::size_t s = 0; s < m.n_states; ++s) {
    avail.clear();
    for (std::size_t o = 0; o < m.n_options; ++o)
      if (m.available(s, o)) avail.push_back(o);
    if (!avail.empty()) choice[s] = static_cast<OptionIndex>(avail[uniform_index(rng, avail.size())]);
  }
  return mdp::TabularPolicy::deterministic(choice, m.n_options);
}

// ---------------------------------------------------------------------------
// Value-loss bound

struct ValueLossOptions {
  bool perturb_transitions = true;
  bool perturb_rewards = true;
  std::size_t n_policies = 20;
};

struct ValueLossReport {
  double eps_T = 0.0;
  double eps_R = 0.0;
  double vmax = 0.0;
  double rmax = 0.0;
  double measured_gap = 0.0;
  double bound = 0.0;
  bool holds = false;
};

namespace detail {

inline void dirichlet_mix(std::span<double> row, double scale, Rng& rng) {
  if (scale == 0.0) return;
  std::vector<std::size_t> support;
  for (std::size_t i = 0; i < row.size(); ++i)
    if (row[i] > 0.0) support.push_back(i);
  std::vector<double> d(support.size());
  sample_dirichlet(rng, 1.0, d);
  double total = 0.0;
  for (std::size_t j = 0; j < support.size(); ++j) {
    double& x = row[support[j]];
    x = (1.0 - scale) * x + scale * d[j];
    total += x;
  }
  if (!(total > 0.0) || !std::isfinite(total)) throw std::invalid_argument("perturbation left an empty row");
  for (std::size_t i : support) row[i] /= total;
}

inline void require_measurable_duration(const GroundedAbstractModel& model) {
  const auto& g = model.ground;
  for (std::size_t t = 0; t < model.n_tuples(); ++t) {
    const auto gt = model.G(t);
    for (std::size_t o = 0; o < g.n_options; ++o) {
      double ref = std::numeric_limits<double>::quiet_NaN();
      for (std::size_t s = 0; s < g.n_states; ++s) {
        if (gt[s] == 0.0 || !g.available(s, o)) continue;
        if (std::isnan(ref)) ref = g.tau(s, o);
        else if (std::abs(g.tau(s, o) - ref) > 1e-12)
          throw std::invalid_argument("option durations vary inside a grounding support");
      }
    }
  }
}

}  // namespace detail

/// Perturbs the abstract transition rows, the grounding and the abstract
/// rewards, measures the realized eps_T / eps_R, and compares Q values of the
/// ground process against the perturbed abstract model for random probe policies.
inline ValueLossReport value_loss_experiment(const GroundedAbstractModel& model, double perturb_scale,
                                             const ValueLossOptions& opts, Rng& rng) {
  if (!(perturb_scale >= 0.0 && perturb_scale <= 1.0))
    throw std::invalid_argument("perturb_scale must lie in [0, 1]");
  detail::require_measurable_duration(model);

  const auto& g = model.ground;
  const std::size_t n = g.n_states, k = g.n_options, nt = model.n_tuples();
  const double gamma = g.gamma;

  FiniteGroundMDP pert = model.abstract;
  std::vector<double> grounding = model.grounding;
  if (opts.perturb_transitions) {
    for (std::size_t t = 0; t < nt; ++t)
      for (std::size_t o = 0; o < k; ++o)
        if (pert.available(t, o)) detail::dirichlet_mix(pert.row(t, o), perturb_scale, rng);
    for (std::size_t t = 0; t < nt; ++t)
      detail::dirichlet_mix(std::span<double>(grounding.data() + t * n, n), perturb_scale, rng);
  }
  double rscale = 1.0;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < k; ++o)
      if (g.available(s, o)) rscale = std::max(rscale, std::abs(g.R(s, o)));
  if (opts.perturb_rewards) {
    for (std::size_t t = 0; t < nt; ++t)
      for (std::size_t o = 0; o < k; ++o)
        if (pert.available(t, o)) pert.R(t, o) += perturb_scale * rscale * uniform(rng, -1.0, 1.0);
  }

  ValueLossReport rep;
  // Realized errors over (tuple, s in supp G, o).
  std::vector<double> t_tilde(n);
  for (std::size_t t = 0; t < nt; ++t) {
    const auto gt = model.G(t);
    for (std::size_t o = 0; o < k; ++o) {
      if (!pert.available(t, o)) continue;
      std::fill(t_tilde.begin(), t_tilde.end(), 0.0);
      const auto prow = pert.row(t, o);
      for (std::size_t j = 0; j < nt; ++j) {
        if (prow[j] == 0.0) continue;
        for (std::size_t s2 = 0; s2 < n; ++s2) t_tilde[s2] += prow[j] * grounding[j * n + s2];
      }
      for (std::size_t s = 0; s < n; ++s) {
        if (gt[s] == 0.0 || !g.available(s, o)) continue;
        double l1 = 0.0;
        const auto r = g.row(s, o);
        for (std::size_t s2 = 0; s2 < n; ++s2) l1 += std::abs(r[s2] - t_tilde[s2]);
        rep.eps_T = std::max(rep.eps_T, l1 * l1);
        const double dr = g.R(s, o) - pert.R(t, o);
        rep.eps_R = std::max(rep.eps_R, dr * dr);
        rep.rmax = std::max({rep.rmax, std::abs(g.R(s, o)), std::abs(pert.R(t, o))});
      }
    }
  }
  rep.vmax = rep.rmax / (1.0 - gamma);
  rep.bound = (std::sqrt(rep.eps_R) + gamma * rep.vmax * std::sqrt(rep.eps_T)) / (1.0 - gamma);

  for (std::size_t p = 0; p < opts.n_policies; ++p) {
    const auto policy = random_deterministic_policy(pert, rng);
    const auto abs_q = solve_policy_values(pert, policy).q;
    const auto lifted = lift_policy(model, policy);
    const auto ground_q = solve_policy_values(lifted.mdp, lifted.policy).q;
    for (std::size_t i = 0; i < lifted.pairs.size(); ++i) {
      const auto t = lifted.pairs[i].first;
      for (std::size_t o = 0; o < k; ++o) {
        const double qg = ground_q[i * k + o];
        const double qa = abs_q[t * k + o];
        if (std::isnan(qg) || std::isnan(qa)) continue;
        rep.measured_gap = std::max(rep.measured_gap, std::abs(qg - qa));
      }
    }
  }
  rep.holds = rep.measured_gap <= rep.bound + 1e-9;
  return rep;
}

// ---------------------------------------------------------------------------
// Grounding error -> transition and reward error

struct GroundingErrorReport {
  double delta = 0.0;        // max_t ||G_z(t) - G_t||_1^2, measured
  double transition_l1 = 0.0;  // max ||T(.|s,o) - T~(.|t,o)||_1
  double reward_error = 0.0;   // max |R-bar(t,o) - R~(t,o)|
  double rmax = 0.0;
  double transition_bound = 0.0;  // sqrt(delta)
  double reward_bound = 0.0;      // rmax * sqrt(delta)
  double combined_reward_bound = 0.0;  // sqrt(delta) + rmax * sqrt(delta)
  bool holds = false;
};

/// z_grounding is [z][s]: one grounding per abstract class, ignoring history.
inline GroundingErrorReport grounding_error_propagation(const GroundedAbstractModel& model,
                                                        std::span<const double> z_grounding) {
  const auto& g = model.ground;
  const std::size_t n = g.n_states, k = g.n_options, nt = model.n_tuples(), K = model.phi.K;
  if (z_grounding.size() != K * n) throw std::invalid_argument("z grounding must be [K][n_states]");
  for (std::size_t z = 0; z < K; ++z) {
    double total = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const double p = z_grounding[z * n + s];
      if (p < 0.0 || (p > 0.0 && model.phi.phi[s] != z))
        throw std::invalid_argument("z grounding row " + std::to_string(z) + " leaves its class");
      total += p;
    }
    if (total != 0.0 && std::abs(total - 1.0) > 1e-12)
      throw std::invalid_argument("z grounding row " + std::to_string(z) + " does not sum to 1");
  }

  GroundingErrorReport rep;
  for (std::size_t t = 0; t < nt; ++t) {
    const auto gt = model.G(t);
    const std::size_t z = model.abstract_states[t].z;
    double l1 = 0.0;
    for (std::size_t s = 0; s < n; ++s) l1 += std::abs(gt[s] - z_grounding[z * n + s]);
    rep.delta = std::max(rep.delta, l1 * l1);
  }
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < k; ++o) rep.rmax = std::max(rep.rmax, std::abs(g.R(s, o)));

  std::vector<double> t_tilde(n);
  for (std::size_t t = 0; t < nt; ++t) {
    const auto gt = model.G(t);
    const std::size_t z = model.abstract_states[t].z;
    for (std::size_t o = 0; o < k; ++o) {
      if (!model.abstract.available(t, o)) continue;
      std::fill(t_tilde.begin(), t_tilde.end(), 0.0);
      const auto arow = model.abstract.row(t, o);
      for (std::size_t j = 0; j < nt; ++j) {
        if (arow[j] == 0.0) continue;
        const std::size_t z2 = model.abstract_states[j].z;
        for (std::size_t s2 = 0; s2 < n; ++s2) t_tilde[s2] += arow[j] * z_grounding[z2 * n + s2];
      }
      for (std::size_t s = 0; s < n; ++s) {
        if (gt[s] == 0.0 || !g.available(s, o)) continue;
        double l1 = 0.0;
        const auto r = g.row(s, o);
        for (std::size_t s2 = 0; s2 < n; ++s2) l1 += std::abs(r[s2] - t_tilde[s2]);
        rep.transition_l1 = std::max(rep.transition_l1, l1);
      }
      double r_bar = 0.0, r_tilde = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        r_bar += gt[s] * g.R(s, o);
        r_tilde += z_grounding[z * n + s] * g.R(s, o);
      }
      rep.reward_error = std::max(rep.reward_error, std::abs(r_bar - r_tilde));
    }
  }
  const double root = std::sqrt(rep.delta);
  rep.transition_bound = root;
  rep.reward_bound = rep.rmax * root;
  rep.combined_reward_bound = root + rep.rmax * root;
  constexpr double kSlack = 1e-12;
  rep.holds = rep.transition_l1 <= rep.transition_bound + kSlack &&
              rep.reward_error <= rep.reward_bound + kSlack &&
              rep.reward_error <= rep.combined_reward_bound + kSlack;
  return rep;
}

/// A z-level grounding: the grounding of the first tuple ending in z, mixed
/// toward a Dirichlet draw over the class support by `mix`.
inline std::vector<double> perturbed_z_grounding(const GroundedAbstractModel& model, double mix, Rng& rng) {
  if (!(mix >= 0.0 && mix <= 1.0)) throw std::invalid_argument("mix must lie in [0, 1]");
  const std::size_t n = model.ground.n_states, K = model.phi.K;
  std::vector<double> out(K * n, 0.0);
  std::vector<std::uint8_t> have(K, 0);
  std::vector<std::vector<std::uint8_t>> support(K, std::vector<std::uint8_t>(n, 0));
  for (std::size_t t = 0; t < model.n_tuples(); ++t) {
    const std::size_t z = model.abstract_states[t].z;
    const auto gt = model.G(t);
    for (std::size_t s = 0; s < n; ++s)
      if (gt[s] > 0.0) support[z][s] = 1;
    if (have[z]) continue;
    have[z] = 1;
    std::copy(gt.begin(), gt.end(), out.begin() + static_cast<std::ptrdiff_t>(z * n));
  }
  for (std::size_t z = 0; z < K; ++z) {
    if (!have[z] || mix == 0.0) continue;
    std::vector<std::size_t> idx;
    for (std::size_t s = 0; s < n; ++s)
      if (support[z][s]) idx.push_back(s);
    std::vector<double> d(idx.size());
    sample_dirichlet(rng, 1.0, d);
    for (std::size_t s = 0; s < n; ++s) out[z * n + s] *= (1.0 - mix);
    for (std::size_t j = 0; j < idx.size(); ++j) out[z * n + idx[j]] += mix * d[j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Strong subgoal partition

struct Refusal {
  StateIndex s1 = 0;
  StateIndex s2 = 0;
  OptionIndex o = 0;
};

using PartitionResult = std::variant<AbstractionMap, Refusal>;

/// Succeeds iff every option has a start-independent outcome distribution on
/// its initiation set; the map then groups states by initiation signature.
inline PartitionResult strong_subgoal_partition(const FiniteGroundMDP& mdp, double tol = 1e-12) {
  const std::size_t n = mdp.n_states, k = mdp.n_options;
  for (std::size_t o = 0; o < k; ++o) {
    std::size_t ref = SIZE_MAX;
    for (std::size_t s = 0; s < n; ++s) {
      if (!mdp.available(s, o)) continue;
      if (ref == SIZE_MAX) {
        ref = s;
        continue;
      }
      const auto a = mdp.row(ref, o), b = mdp.row(s, o);
      for (std::size_t s2 = 0; s2 < n; ++s2)
        if (std::abs(a[s2] - b[s2]) > tol)
          return Refusal{static_cast<StateIndex>(ref), static_cast<StateIndex>(s), static_cast<OptionIndex>(o)};
    }
  }
  std::map<std::vector<std::uint8_t>, std::uint32_t> ids;
  AbstractionMap phi;
  phi.phi.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<std::uint8_t> sig(mdp.initiation.begin() + static_cast<std::ptrdiff_t>(s * k),
                                  mdp.initiation.begin() + static_cast<std::ptrdiff_t>((s + 1) * k));
    auto [it, inserted] = ids.emplace(std::move(sig), static_cast<std::uint32_t>(ids.size()));
    phi.phi[s] = it->second;
  }
  phi.K = ids.size();
  return phi;
}

}  // namespace skillworld::tabular
