#pragma once

// State abstractions over finite ground MDPs and the grounded abstract model
// built from them. Abstract states are transition tuples (z_prev, o_prev, z)
// with sentinels z_bot = K and o_bot = n_options marking initial tuples.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "skillworld/core/mdp.hpp"

namespace skillworld::tabular {

using mdp::FiniteGroundMDP;
using mdp::OptionIndex;
using mdp::StateIndex;

struct AbstractionMap {
  std::vector<std::uint32_t> phi;
  std::size_t K = 0;

  static AbstractionMap identity(std::size_t n) {
    AbstractionMap m;
    m.K = n;
    m.phi.resize(n);
    for (std::size_t s = 0; s < n; ++s) m.phi[s] = static_cast<std::uint32_t>(s);
    return m;
  }

  void validate(std::size_t n_states) const {
    if (phi.size() != n_states) throw std::invalid_argument("abstraction: phi must cover every ground state");
    for (auto z : phi)
      if (z >= K) throw std::invalid_argument("abstraction: phi value out of range");
  }
};

/// States reachable with positive probability from supp(p0) under available options.
inline std::vector<std::uint8_t> reachable_states(const FiniteGroundMDP& mdp) {
  std::vector<std::uint8_t> seen(mdp.n_states, 0);
  std::deque<std::size_t> queue;
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    if (mdp.p0[s] > 0.0) {
      seen[s] = 1;
      queue.push_back(s);
    }
  while (!queue.empty()) {
    const std::size_t s = queue.front();
    queue.pop_front();
    for (std::size_t o = 0; o < mdp.n_options; ++o) {
      if (!mdp.available(s, o)) continue;
      const auto r = mdp.row(s, o);
      for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2)
        if (r[s2] > 0.0 && !seen[s2]) {
          seen[s2] = 1;
          queue.push_back(s2);
        }
    }
  }
  return seen;
}

/// BFS depth from supp(p0); unreachable states get SIZE_MAX.
inline std::vector<std::size_t> reach_depth(const FiniteGroundMDP& mdp) {
  std::vector<std::size_t> depth(mdp.n_states, SIZE_MAX);
  std::deque<std::size_t> queue;
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    if (mdp.p0[s] > 0.0) {
      depth[s] = 0;
      queue.push_back(s);
    }
  while (!queue.empty()) {
    const std::size_t s = queue.front();
    queue.pop_front();
    for (std::size_t o = 0; o < mdp.n_options; ++o) {
      if (!mdp.available(s, o)) continue;
      const auto r = mdp.row(s, o);
      for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2)
        if (r[s2] > 0.0 && depth[s2] == SIZE_MAX) {
          depth[s2] = depth[s] + 1;
          queue.push_back(s2);
        }
    }
  }
  return depth;
}

enum class ViolationKind { kTransition, kInitiation };

struct Violation {
  StateIndex s1 = 0;
  StateIndex s2 = 0;
  OptionIndex o = 0;
  ViolationKind kind = ViolationKind::kTransition;
};

struct DynamicsVerdict {
  bool preserving = true;
  std::vector<Violation> violations;
};

inline DynamicsVerdict check_dynamics_preserving(const FiniteGroundMDP& mdp, const AbstractionMap& phi,
                                                 double tol = 1e-12) {
  phi.validate(mdp.n_states);
  const auto reach = reachable_states(mdp);
  DynamicsVerdict verdict;
  // Compare every reachable state with the first reachable member of its class.
  std::vector<std::size_t> representative(phi.K, SIZE_MAX);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    if (!reach[s]) continue;
    const std::size_t z = phi.phi[s];
    if (representative[z] == SIZE_MAX) {
      representative[z] = s;
      continue;
    }
    const std::size_t r = representative[z];
    for (std::size_t o = 0; o < mdp.n_options; ++o) {
      if (mdp.available(r, o) != mdp.available(s, o)) {
        verdict.violations.push_back({static_cast<StateIndex>(r), static_cast<StateIndex>(s),
                                      static_cast<OptionIndex>(o), ViolationKind::kInitiation});
        continue;
      }
      if (!mdp.available(s, o)) continue;
      const auto a = mdp.row(r, o);
      const auto b = mdp.row(s, o);
      double gap = 0.0;
      for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2) gap = std::max(gap, std::abs(a[s2] - b[s2]));
      if (gap > tol)
        verdict.violations.push_back({static_cast<StateIndex>(r), static_cast<StateIndex>(s),
                                      static_cast<OptionIndex>(o), ViolationKind::kTransition});
    }
  }
  verdict.preserving = verdict.violations.empty();
  return verdict;
}

struct AbstractTuple {
  std::uint32_t z_prev = 0;
  std::uint32_t o_prev = 0;
  std::uint32_t z = 0;

  friend bool operator==(const AbstractTuple&, const AbstractTuple&) = default;
  friend auto operator<=>(const AbstractTuple&, const AbstractTuple&) = default;
};

struct GroundedAbstractModel {
  FiniteGroundMDP ground;
  AbstractionMap phi;
  std::vector<AbstractTuple> abstract_states;
  /// Abstract MDP over tuples: p0, transition, reward, duration and initiation
  /// are stored in the same layout as a ground MDP.
  FiniteGroundMDP abstract;
  std::vector<double> grounding;      // [tuple][s]
  std::vector<double> class_row;      // [z][o][s'], T(s'|z,o)
  std::vector<std::uint8_t> class_available;  // [z][o]

  std::uint32_t z_bot() const { return static_cast<std::uint32_t>(phi.K); }
  std::uint32_t o_bot() const { return static_cast<std::uint32_t>(ground.n_options); }
  std::size_t n_tuples() const { return abstract_states.size(); }

  std::span<const double> G(std::size_t t) const {
    return {grounding.data() + t * ground.n_states, ground.n_states};
  }
  std::span<double> G(std::size_t t) {
    return {grounding.data() + t * ground.n_states, ground.n_states};
  }

  std::size_t tuple_index(const AbstractTuple& key) const {
    auto it = std::lower_bound(abstract_states.begin(), abstract_states.end(), key);
    if (it == abstract_states.end() || !(*it == key)) return SIZE_MAX;
    return static_cast<std::size_t>(it - abstract_states.begin());
  }
};

namespace detail {

/// Class-level row T(s'|z,o): mean of the rows of reachable members where o
/// is available. Equals every member's row when phi is dynamics preserving.
inline void class_rows(const FiniteGroundMDP& mdp, const AbstractionMap& phi,
                       const std::vector<std::uint8_t>& reach, std::vector<double>& rows,
                       std::vector<std::uint8_t>& available) {
  const std::size_t n = mdp.n_states, k = mdp.n_options;
  rows.assign(phi.K * k * n, 0.0);
  available.assign(phi.K * k, 0);
  std::vector<std::size_t> count(phi.K * k, 0);
  for (std::size_t s = 0; s < n; ++s) {
    if (!reach[s]) continue;
    const std::size_t z = phi.phi[s];
    for (std::size_t o = 0; o < k; ++o) {
      if (!mdp.available(s, o)) continue;
      ++count[z * k + o];
      const auto r = mdp.row(s, o);
      for (std::size_t s2 = 0; s2 < n; ++s2) rows[(z * k + o) * n + s2] += r[s2];
    }
  }
  for (std::size_t zo = 0; zo < phi.K * k; ++zo) {
    if (count[zo] == 0) continue;
    available[zo] = 1;
    for (std::size_t s2 = 0; s2 < n; ++s2) rows[zo * n + s2] /= static_cast<double>(count[zo]);
  }
}

}  // namespace detail

/// Builds (M, M-bar, G) from a ground MDP and an abstraction. For a
/// non-preserving phi the class rows are member averages, which gives the
/// construction a definite meaning the rollout checks can then refute.
inline GroundedAbstractModel build_abstract_model(const FiniteGroundMDP& mdp, const AbstractionMap& phi) {
  mdp.validate();
  phi.validate(mdp.n_states);
  const std::size_t n = mdp.n_states, k = mdp.n_options, K = phi.K;
  const auto reach = reachable_states(mdp);

  GroundedAbstractModel model;
  model.ground = mdp;
  model.phi = phi;
  detail::class_rows(mdp, phi, reach, model.class_row, model.class_available);

  auto row_zo = [&](std::size_t z, std::size_t o) {
    return std::span<const double>(model.class_row.data() + (z * k + o) * n, n);
  };
  auto class_mass = [&](std::span<const double> row, std::size_t z2) {
    double m = 0.0;
    for (std::size_t s = 0; s < n; ++s)
      if (phi.phi[s] == z2) m += row[s];
    return m;
  };

  // Enumerate reachable tuples.
  std::vector<double> p0z(K, 0.0);
  for (std::size_t s = 0; s < n; ++s) p0z[phi.phi[s]] += mdp.p0[s];

  const auto zb = static_cast<std::uint32_t>(K);
  const auto ob = static_cast<std::uint32_t>(k);
  std::vector<AbstractTuple> tuples;
  std::deque<AbstractTuple> queue;
  std::vector<std::uint8_t> seen_last(K * k * K, 0);  // non-initial tuples keyed by (z,o,z')
  for (std::size_t z = 0; z < K; ++z)
    if (p0z[z] > 0.0) {
      tuples.push_back({zb, ob, static_cast<std::uint32_t>(z)});
      queue.push_back(tuples.back());
    }
  while (!queue.empty()) {
    const AbstractTuple t = queue.front();
    queue.pop_front();
    const std::size_t z = t.z;
    for (std::size_t o = 0; o < k; ++o) {
      if (!model.class_available[z * k + o]) continue;
      const auto row = row_zo(z, o);
      for (std::size_t z2 = 0; z2 < K; ++z2) {
        if (class_mass(row, z2) <= 0.0) continue;
        const std::size_t key = (z * k + o) * K + z2;
        if (seen_last[key]) continue;
        seen_last[key] = 1;
        tuples.push_back({static_cast<std::uint32_t>(z), static_cast<std::uint32_t>(o),
                          static_cast<std::uint32_t>(z2)});
        queue.push_back(tuples.back());
      }
    }
  }
  std::sort(tuples.begin(), tuples.end());
  model.abstract_states = tuples;
  const std::size_t nt = tuples.size();

  // Grounding rows.
  model.grounding.assign(nt * n, 0.0);
  for (std::size_t i = 0; i < nt; ++i) {
    const auto& t = tuples[i];
    auto g = model.G(i);
    if (t.z_prev == zb) {
      for (std::size_t s = 0; s < n; ++s)
        if (phi.phi[s] == t.z) g[s] = mdp.p0[s] / p0z[t.z];
    } else {
      const auto row = row_zo(t.z_prev, t.o_prev);
      const double mass = class_mass(row, t.z);
      for (std::size_t s = 0; s < n; ++s)
        if (phi.phi[s] == t.z) g[s] = row[s] / mass;
    }
  }

  // Abstract MDP over tuples.
  FiniteGroundMDP& a = model.abstract;
  a = FiniteGroundMDP::zeros(nt, k, mdp.gamma);
  for (std::size_t i = 0; i < nt; ++i) {
    const auto& t = tuples[i];
    if (t.z_prev == zb) a.p0[i] = p0z[t.z];
    const auto g = model.G(i);
    for (std::size_t o = 0; o < k; ++o) {
      if (!model.class_available[t.z * k + o]) continue;
      a.set_available(i, o, true);
      const auto row = row_zo(t.z, o);
      for (std::size_t z2 = 0; z2 < K; ++z2) {
        const double m = class_mass(row, z2);
        if (m <= 0.0) continue;
        const std::size_t j = model.tuple_index({t.z, static_cast<std::uint32_t>(o), static_cast<std::uint32_t>(z2)});
        a.T(i, o, j) = m;
      }
      // Grounding-weighted reward and duration over members where o is available.
      double w = 0.0, r = 0.0, d = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        if (g[s] == 0.0 || !mdp.available(s, o)) continue;
        w += g[s];
        r += g[s] * mdp.R(s, o);
        d += g[s] * mdp.tau(s, o);
      }
      if (w > 0.0) {
        a.R(i, o) = r / w;
        a.tau(i, o) = d / w;
      }
    }
  }
  return model;
}

/// Grounded future-state distribution B-bar_t: the abstract trajectory is
/// marginalized exactly, with each abstract state re-grounded through G.
inline mdp::DistributionRollout grounded_rollout_distribution(const GroundedAbstractModel& model,
                                                              std::span<const OptionIndex> options);

namespace detail {

struct GroundedEntry {
  mdp::StateSequence states;
  std::uint32_t tuple = 0;
  double prob = 0.0;
};

/// Working state of B-bar_t before marginalizing over the current tuple.
struct GroundedRollout {
  std::vector<GroundedEntry> entries;
};

inline GroundedRollout grounded_initial(const GroundedAbstractModel& m) {
  GroundedRollout r;
  const std::size_t n = m.ground.n_states;
  for (std::size_t i = 0; i < m.n_tuples(); ++i) {
    const double p = m.abstract.p0[i];
    if (p <= 0.0) continue;
    const auto g = m.G(i);
    for (std::size_t s = 0; s < n; ++s)
      if (g[s] > 0.0) r.entries.push_back({{static_cast<StateIndex>(s)}, static_cast<std::uint32_t>(i), p * g[s]});
  }
  return r;
}

inline GroundedRollout grounded_extend(const GroundedAbstractModel& m, const GroundedRollout& prev, OptionIndex o) {
  GroundedRollout next;
  const std::size_t n = m.ground.n_states, nt = m.n_tuples();
  next.entries.reserve(prev.entries.size() * 2);
  for (const auto& e : prev.entries) {
    if (!m.abstract.available(e.tuple, o)) continue;
    const auto row = m.abstract.row(e.tuple, o);
    for (std::size_t j = 0; j < nt; ++j) {
      if (row[j] == 0.0) continue;
      const auto g = m.G(j);
      for (std::size_t s = 0; s < n; ++s) {
        if (g[s] == 0.0) continue;
        const double p = e.prob * row[j] * g[s];
        if (p < mdp::kPruneThreshold) continue;
        GroundedEntry ne{e.states, static_cast<std::uint32_t>(j), p};
        ne.states.push_back(static_cast<StateIndex>(s));
        next.entries.push_back(std::move(ne));
      }
    }
  }
  return next;
}

inline mdp::DistributionRollout marginalize(const GroundedRollout& r) {
  std::vector<const GroundedEntry*> order;
  order.reserve(r.entries.size());
  for (const auto& e : r.entries) order.push_back(&e);
  std::sort(order.begin(), order.end(), [](const GroundedEntry* a, const GroundedEntry* b) {
    if (a->states != b->states) return a->states < b->states;
    return a->tuple < b->tuple;
  });
  mdp::DistributionRollout out;
  for (const auto* e : order) {
    if (!out.joint.empty() && out.joint.back().states == e->states)
      out.joint.back().prob += e->prob;
    else
      out.joint.push_back({e->states, e->prob});
  }
  return out;
}

}  // namespace detail

inline mdp::DistributionRollout grounded_rollout_distribution(const GroundedAbstractModel& model,
                                                              std::span<const OptionIndex> options) {
  detail::GroundedRollout r = detail::grounded_initial(model);
  for (OptionIndex o : options) {
    if (o >= model.ground.n_options) throw std::invalid_argument("grounded rollout: option index out of range");
    r = detail::grounded_extend(model, r, o);
  }
  auto out = detail::marginalize(r);
  out.horizon = options.size();
  out.option_sequence.assign(options.begin(), options.end());
  return out;
}

}  // namespace skillworld::tabular
