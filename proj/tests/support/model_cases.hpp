#pragma once

// Small models and batches for loss-level gradient checks.

#include <functional>
#include <string>
#include <vector>

#include "skillworld/autodiff/gradcheck.hpp"
#include "skillworld/model/train.hpp"
#include "skillworld/util/rng.hpp"

namespace skillworld::testsupport {

inline model::ModelConfig tiny_model_config(std::size_t obs_dim = 4, std::size_t n_options = 3) {
  model::ModelConfig c;
  c.obs_dim = obs_dim;
  c.n_options = n_options;
  c.d_z = 3;
  c.mog_components = 4;
  c.hidden = {8, 8};
  c.critic_hidden = 6;
  c.critic_embed = 4;
  c.sigma_enc = 0.1;
  return c;
}

/// Random trajectories of random ground vectors.
inline model::TrainingSet random_training_set(std::size_t n, std::size_t obs_dim, std::size_t n_options, Rng& rng) {
  model::TrainingSet ts;
  ts.obs_dim = obs_dim;
  ts.n_options = n_options;
  ts.observe = [obs_dim](const std::vector<double>& g, double* out) { std::copy_n(g.begin(), obs_dim, out); };
  for (std::size_t i = 0; i < n; ++i) {
    model::Record r;
    for (std::size_t d = 0; d < obs_dim; ++d) {
      r.ground.push_back(uniform(rng, -1, 1));
      r.next_ground.push_back(uniform(rng, -1, 1));
    }
    r.option = uniform_index(rng, n_options);
    r.r_gamma = uniform(rng, -20, 5);
    r.tau = 1.0 + static_cast<double>(uniform_index(rng, 8));
    for (std::size_t o = 0; o < n_options; ++o) r.initiation.push_back(bernoulli(rng, 0.6));
    r.initiation[r.option] = 1;
    r.prev = (i % 5 == 0) ? -1 : static_cast<long>(i) - 1;
    ts.records.push_back(std::move(r));
  }
  return ts;
}

struct LossCase {
  std::string name;
  std::function<ad::Tensor(const model::Losses&)> pick;
};

inline std::vector<LossCase> loss_cases() {
  return {{"L_phi", [](const model::Losses& l) { return l.phi; }},
          {"L_I", [](const model::Losses& l) { return l.initiation; }},
          {"L_T", [](const model::Losses& l) { return l.transition; }},
          {"L_R", [](const model::Losses& l) { return l.reward; }},
          {"L_tau", [](const model::Losses& l) { return l.duration; }}};
}

/// Finite-difference check of one loss over every model parameter.
inline ad::GradCheckResult check_loss_gradient(const LossCase& lc, std::uint64_t seed) {
  auto rng = make_stream(seed, "loss-fd-" + lc.name);
  const auto cfg = tiny_model_config();
  model::AbstractModel m(cfg, rng);
  const auto ts = random_training_set(40, cfg.obs_dim, cfg.n_options, rng);
  const auto iw = model::initiation_weights(ts);
  std::vector<std::size_t> idx(6);
  for (auto& i : idx) i = uniform_index(rng, ts.size());
  auto batch = model::make_batch(ts, m, iw, idx, rng);
  model::freeze_stop_gradients(m, batch);
  return ad::check_gradients([&] { return lc.pick(model::compute_losses(m, batch, {})); },
                             ad::tensors_of(m.parameters()));
}

}  // namespace skillworld::testsupport
