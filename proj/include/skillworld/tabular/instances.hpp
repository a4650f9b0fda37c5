#pragma once

// Seeded generators of labeled tabular instances: block MDPs that are
// dynamics preserving by construction, single-member perturbations of them
// that are not, and strong-subgoal MDPs with and without a violating option.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "skillworld/core/mdp.hpp"
#include "skillworld/tabular/abstraction.hpp"
#include "skillworld/util/rng.hpp"

namespace skillworld::tabular {

struct LabeledInstance {
  FiniteGroundMDP mdp;
  AbstractionMap phi;
  bool preserving = true;
};

struct BlockOptions {
  std::size_t max_classes = 4;      // at most 3 members each, so n <= 12
  std::size_t max_members = 3;
  std::size_t min_options = 2;
  std::size_t max_options = 4;
  double gamma = 0.9;
  bool per_state_reward = true;     // rewards vary inside a class
  bool shared_within_class = false; // every grounding of class z is the same mu_z
};

namespace detail {

inline std::size_t uniform_between(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + uniform_index(rng, hi - lo + 1);
}

/// Sparse distribution over `candidates` with support 2-3 (or fewer if there
/// are fewer candidates) and minimum entry at least 0.2/support.
inline void sparse_row(Rng& rng, const std::vector<std::size_t>& candidates, std::span<double> row) {
  std::fill(row.begin(), row.end(), 0.0);
  std::vector<std::size_t> pool = candidates;
  const std::size_t m = std::min<std::size_t>(pool.size(), uniform_between(rng, 2, 3));
  for (std::size_t i = 0; i < m; ++i) std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
  std::vector<double> w(m);
  sample_dirichlet(rng, 1.0, w);
  for (std::size_t i = 0; i < m; ++i) row[pool[i]] += 0.8 * w[i] + 0.2 / static_cast<double>(m);
}

inline std::vector<std::size_t> iota_vec(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace detail

/// Block MDP: every member of a class shares initiation flags, transition
/// rows and durations with the rest of its class.
inline LabeledInstance block_instance(Rng& rng, const BlockOptions& opt = {}) {
  const std::size_t K = detail::uniform_between(rng, 2, opt.max_classes);
  const std::size_t k = detail::uniform_between(rng, opt.min_options, opt.max_options);
  std::vector<std::size_t> members(K);
  for (auto& m : members) m = detail::uniform_between(rng, 1, opt.max_members);
  const std::size_t n = std::accumulate(members.begin(), members.end(), std::size_t{0});

  LabeledInstance inst;
  inst.preserving = true;
  inst.phi.K = K;
  inst.phi.phi.resize(n);
  std::vector<std::vector<std::size_t>> cls(K);
  {
    // Shuffle state ids so classes are not contiguous.
    auto order = detail::iota_vec(n);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    std::size_t next = 0;
    for (std::size_t z = 0; z < K; ++z)
      for (std::size_t j = 0; j < members[z]; ++j) {
        const std::size_t s = order[next++];
        inst.phi.phi[s] = static_cast<std::uint32_t>(z);
        cls[z].push_back(s);
      }
  }

  // Within-class distribution mu_z, used when groundings are shared.
  std::vector<std::vector<double>> mu(K, std::vector<double>(n, 0.0));
  for (std::size_t z = 0; z < K; ++z) {
    std::vector<double> w(cls[z].size());
    sample_dirichlet(rng, 1.0, w);
    for (std::size_t j = 0; j < cls[z].size(); ++j)
      mu[z][cls[z][j]] = 0.8 * w[j] + 0.2 / static_cast<double>(cls[z].size());
  }

  FiniteGroundMDP m = FiniteGroundMDP::zeros(n, k, opt.gamma);
  const auto all = detail::iota_vec(n);
  std::vector<double> row(n), class_w(K);
  const auto class_ids = detail::iota_vec(K);
  for (std::size_t z = 0; z < K; ++z) {
    std::vector<std::uint8_t> avail(k, 0);
    bool any = false;
    for (std::size_t o = 0; o < k; ++o) any |= (avail[o] = bernoulli(rng, 0.7) ? 1 : 0);
    if (!any) avail[uniform_index(rng, k)] = 1;
    for (std::size_t o = 0; o < k; ++o) {
      if (!avail[o]) continue;
      if (opt.shared_within_class) {
        detail::sparse_row(rng, class_ids, class_w);
        std::fill(row.begin(), row.end(), 0.0);
        for (std::size_t z2 = 0; z2 < K; ++z2)
          for (std::size_t s2 = 0; s2 < n; ++s2) row[s2] += class_w[z2] * mu[z2][s2];
      } else {
        detail::sparse_row(rng, all, row);
      }
      const double tau = uniform(rng, 1.0, 4.0);
      const double class_r = uniform(rng, -1.0, 1.0);
      for (std::size_t s : cls[z]) {
        m.set_available(s, o, true);
        std::copy(row.begin(), row.end(), m.row(s, o).begin());
        m.tau(s, o) = tau;
        m.R(s, o) = opt.per_state_reward ? uniform(rng, -1.0, 1.0) : class_r;
      }
    }
  }
  if (opt.shared_within_class) {
    const std::size_t z0 = uniform_index(rng, K);
    m.p0 = mu[z0];
  } else {
    detail::sparse_row(rng, all, m.p0);
  }
  inst.mdp = std::move(m);
  return inst;
}

/// A block MDP in which one reachable member (depth <= 3, with a reachable
/// sibling) gets a different row or loses an option, so phi stops being
/// dynamics preserving.
inline LabeledInstance nonpreserving_instance(Rng& rng, const BlockOptions& opt = {}) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    LabeledInstance inst = block_instance(rng, opt);
    auto& m = inst.mdp;
    const auto depth = reach_depth(m);
    std::vector<std::size_t> reach_count(inst.phi.K, 0);
    for (std::size_t s = 0; s < m.n_states; ++s)
      if (depth[s] != SIZE_MAX) ++reach_count[inst.phi.phi[s]];
    std::vector<std::size_t> candidates;
    for (std::size_t s = 0; s < m.n_states; ++s)
      if (depth[s] <= 3 && reach_count[inst.phi.phi[s]] >= 2) candidates.push_back(s);
    if (candidates.empty()) continue;
    const std::size_t s = candidates[uniform_index(rng, candidates.size())];
    std::vector<std::size_t> avail;
    for (std::size_t o = 0; o < m.n_options; ++o)
      if (m.available(s, o)) avail.push_back(o);
    const std::size_t o = avail[uniform_index(rng, avail.size())];

    if (bernoulli(rng, 0.3)) {
      m.set_available(s, o, false);
      std::fill(m.row(s, o).begin(), m.row(s, o).end(), 0.0);
    } else {
      const std::vector<double> old(m.row(s, o).begin(), m.row(s, o).end());
      const auto all = detail::iota_vec(m.n_states);
      double diff = 0.0;
      for (int tries = 0; tries < 100 && diff < 0.1; ++tries) {
        detail::sparse_row(rng, all, m.row(s, o));
        diff = 0.0;
        for (std::size_t s2 = 0; s2 < m.n_states; ++s2) diff = std::max(diff, std::abs(old[s2] - m.T(s, o, s2)));
      }
      if (diff < 0.1) continue;
    }
    inst.preserving = false;
    if (check_dynamics_preserving(m, inst.phi).preserving) continue;
    return inst;
  }
  throw std::runtime_error("nonpreserving_instance: generator exhausted its attempts");
}

struct SubgoalOptions {
  std::size_t min_states = 3;
  std::size_t max_states = 12;
  std::size_t max_options = 4;
  double gamma = 0.9;
};

/// Every option resets to an option-specific distribution regardless of the
/// start state.
inline FiniteGroundMDP strong_subgoal_instance(Rng& rng, const SubgoalOptions& opt = {}) {
  const std::size_t n = detail::uniform_between(rng, opt.min_states, opt.max_states);
  const std::size_t k = detail::uniform_between(rng, 1, opt.max_options);
  FiniteGroundMDP m = FiniteGroundMDP::zeros(n, k, opt.gamma);
  const auto all = detail::iota_vec(n);
  std::vector<double> reset(n);
  for (std::size_t o = 0; o < k; ++o) {
    detail::sparse_row(rng, all, reset);
    const double tau = uniform(rng, 1.0, 4.0);
    for (std::size_t s = 0; s < n; ++s) {
      m.set_available(s, o, bernoulli(rng, 0.6));
      std::copy(reset.begin(), reset.end(), m.row(s, o).begin());
      m.tau(s, o) = tau;
      m.R(s, o) = uniform(rng, -1.0, 1.0);
    }
  }
  for (std::size_t s = 0; s < n; ++s)
    if (!m.any_available(s)) m.set_available(s, uniform_index(rng, k), true);
  detail::sparse_row(rng, all, m.p0);
  return m;
}

struct ViolatingSubgoal {
  FiniteGroundMDP mdp;
  OptionIndex option = 0;  // the state-dependent option
  StateIndex state = 0;    // the state whose row was changed
};

inline ViolatingSubgoal violating_subgoal_instance(Rng& rng, const SubgoalOptions& opt = {}) {
  ViolatingSubgoal out;
  out.mdp = strong_subgoal_instance(rng, opt);
  auto& m = out.mdp;
  const std::size_t o = uniform_index(rng, m.n_options);
  // Make sure the option has at least two starting states.
  std::vector<std::size_t> init;
  for (std::size_t s = 0; s < m.n_states; ++s)
    if (m.available(s, o)) init.push_back(s);
  while (init.size() < 2) {
    const std::size_t s = uniform_index(rng, m.n_states);
    if (m.available(s, o)) continue;
    m.set_available(s, o, true);
    init.push_back(s);
  }
  const std::size_t s = init[uniform_index(rng, init.size())];
  const std::vector<double> old(m.row(s, o).begin(), m.row(s, o).end());
  const auto all = detail::iota_vec(m.n_states);
  double diff = 0.0;
  while (diff < 0.1) {
    detail::sparse_row(rng, all, m.row(s, o));
    diff = 0.0;
    for (std::size_t s2 = 0; s2 < m.n_states; ++s2) diff = std::max(diff, std::abs(old[s2] - m.T(s, o, s2)));
  }
  out.option = static_cast<OptionIndex>(o);
  out.state = static_cast<StateIndex>(s);
  return out;
}

/// Fully random MDP with every option available everywhere.
inline FiniteGroundMDP random_mdp(Rng& rng, std::size_t n, std::size_t k, double gamma) {
  FiniteGroundMDP m = FiniteGroundMDP::zeros(n, k, gamma);
  std::vector<double> row(n);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < k; ++o) {
      sample_dirichlet(rng, 1.0, row);
      std::copy(row.begin(), row.end(), m.row(s, o).begin());
      m.set_available(s, o, true);
      m.R(s, o) = uniform(rng, -1.0, 1.0);
      m.tau(s, o) = uniform(rng, 1.0, 3.0);
    }
  sample_dirichlet(rng, 1.0, m.p0);
  return m;
}

}  // namespace skillworld::tabular
