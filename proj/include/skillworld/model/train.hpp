#pragma once

// Model-learning losses and the pretraining loop.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skillworld/autodiff/adam.hpp"
#include "skillworld/autodiff/checkpoint.hpp"
#include "skillworld/autodiff/transforms.hpp"
#include "skillworld/model/data.hpp"
#include "skillworld/model/model.hpp"
#include "skillworld/util/csv.hpp"
#include "skillworld/util/rng.hpp"

namespace skillworld::model {

struct LossWeights {
  double info = 1.0;
  double initiation = 1.0;
  double transition = 1.0;
  double reward = 1.0;
  double duration = 1.0;

  void validate() const {
    for (double b : {info, initiation, transition, reward, duration})
      if (!(b >= 0.0)) throw std::invalid_argument("loss weights must be >= 0");
  }
};

/// Per-option BCE weights 1 / (2 * class frequency), capped.
struct InitiationWeights {
  std::vector<double> positive;
  std::vector<double> negative;
};

inline InitiationWeights initiation_weights(const TrainingSet& ts, double cap = 100.0) {
  if (ts.empty()) throw std::invalid_argument("initiation_weights: empty training set");
  InitiationWeights w;
  const double n = static_cast<double>(ts.size());
  for (std::size_t o = 0; o < ts.n_options; ++o) {
    double pos = 0.0;
    for (const auto& r : ts.records) pos += r.initiation[o];
    auto weight = [&](double count) { return count > 0.0 ? std::min(cap, n / (2.0 * count)) : cap; };
    w.positive.push_back(weight(pos));
    w.negative.push_back(weight(n - pos));
  }
  return w;
}

struct Batch {
  Tensor obs, next_obs, prev_obs;
  std::vector<std::size_t> options, prev_options;
  Tensor prev_mask;  // B x d_z, zero rows mark the trajectory start sentinel
  Tensor init_labels;
  Tensor init_weights;
  Tensor reward_target;    // symlog(r_gamma)
  Tensor duration_target;  // ln(tau)
  Tensor noise_obs, noise_next;
  // Values for the stop-gradient encodings; computed from the current
  // encoder when absent. Set by freeze_stop_gradients() for derivative checks.
  std::optional<Tensor> fixed_z, fixed_next_z, fixed_prev_z;

  std::size_t size() const { return options.size(); }
};

inline Batch make_batch(const TrainingSet& ts, const AbstractModel& m, const InitiationWeights& iw,
                        const std::vector<std::size_t>& idx, Rng& noise_rng) {
  const std::size_t B = idx.size(), D = ts.obs_dim, O = ts.n_options, dz = m.d_z();
  std::vector<double> obs(B * D, 0.0), next(B * D, 0.0), prev(B * D, 0.0), mask(B * dz, 0.0);
  std::vector<double> labels(B * O), weights(B * O), rt(B), dt(B);
  Batch b;
  for (std::size_t i = 0; i < B; ++i) {
    const auto& r = ts.records.at(idx[i]);
    ts.observe(r.ground, obs.data() + i * D);
    ts.observe(r.next_ground, next.data() + i * D);
    b.options.push_back(r.option);
    if (r.prev >= 0) {
      const auto& p = ts.records[static_cast<std::size_t>(r.prev)];
      ts.observe(p.ground, prev.data() + i * D);
      b.prev_options.push_back(p.option);
      for (std::size_t d = 0; d < dz; ++d) mask[i * dz + d] = 1.0;
    } else {
      b.prev_options.push_back(m.o_bot());
    }
    for (std::size_t o = 0; o < O; ++o) {
      labels[i * O + o] = r.initiation[o];
      weights[i * O + o] = r.initiation[o] ? iw.positive[o] : iw.negative[o];
    }
    if (!(r.tau > 0.0)) throw std::invalid_argument("record with non-positive duration");
    rt[i] = ad::symlog(r.r_gamma);
    dt[i] = std::log(r.tau);
  }
  b.obs = Tensor::from(B, D, std::move(obs));
  b.next_obs = Tensor::from(B, D, std::move(next));
  b.prev_obs = Tensor::from(B, D, std::move(prev));
  b.prev_mask = Tensor::from(B, dz, std::move(mask));
  b.init_labels = Tensor::from(B, O, std::move(labels));
  b.init_weights = Tensor::from(B, O, std::move(weights));
  b.reward_target = Tensor::from(B, 1, std::move(rt));
  b.duration_target = Tensor::from(B, 1, std::move(dt));
  b.noise_obs = m.sample_noise(B, noise_rng);
  b.noise_next = m.sample_noise(B, noise_rng);
  return b;
}

/// Pins the stop-gradient encodings at the current encoder's values, so the
/// losses become ordinary functions of the parameters.
inline void freeze_stop_gradients(const AbstractModel& m, Batch& b) {
  ad::NoGradGuard ng;
  b.fixed_z = m.encoder(b.obs);
  b.fixed_next_z = m.encoder(b.next_obs);
  b.fixed_prev_z = m.encoder(b.prev_obs);
}

struct Losses {
  Tensor total;
  Tensor phi;
  Tensor initiation;
  Tensor transition;
  Tensor reward;
  Tensor duration;
  double mi_dynamics = 0.0;  // InfoNCE bound on MI(Z'; Z, O)
  double mi_grounding = 0.0;  // InfoNCE bound on MI(S'; Z')
};

/// Weighted binary cross-entropy with logits, averaged over rows and options.
inline Tensor weighted_bce(const Tensor& logits, const Tensor& labels, const Tensor& weights) {
  return ad::mean(ad::mul(weights, ad::sub(ad::softplus(logits), ad::mul(labels, logits))));
}

inline Losses compute_losses(const AbstractModel& m, const Batch& b, const LossWeights& w) {
  const double sigma = m.config().sigma_enc;
  const Tensor z_clean = m.encoder(b.obs);
  const Tensor zn_clean = m.encoder(b.next_obs);
  const Tensor z = sigma > 0.0 ? ad::add(z_clean, ad::scale(b.noise_obs, sigma)) : z_clean;
  const Tensor zn = sigma > 0.0 ? ad::add(zn_clean, ad::scale(b.noise_next, sigma)) : zn_clean;

  Losses L;
  const Tensor mi1 = infonce_bound(m.critic_dynamics.scores(m.transition_context(z, b.options), zn));
  const Tensor mi2 = infonce_bound(m.critic_grounding.scores(b.next_obs, zn));
  L.mi_dynamics = mi1.item();
  L.mi_grounding = mi2.item();
  L.phi = ad::scale(ad::add(mi1, mi2), -1.0);

  L.initiation = weighted_bce(m.initiation_logits(z), b.init_labels, b.init_weights);

  // The next-state target is the deterministic encoding, held fixed.
  const Tensor zn_fixed = b.fixed_next_z ? *b.fixed_next_z : zn_clean.detach();
  L.transition = ad::scale(ad::mean(ad::mog_log_prob(m.transition_params(z, b.options), zn_fixed)), -1.0);

  // Reward and duration see a frozen encoder.
  const Tensor z_fixed = b.fixed_z ? *b.fixed_z : z_clean.detach();
  const Tensor z_prev = ad::mul(b.fixed_prev_z ? *b.fixed_prev_z : m.encoder(b.prev_obs).detach(), b.prev_mask);
  const Tensor in = m.reward_input(z_prev, b.prev_options, z_fixed, b.options);
  L.reward = ad::mean(ad::square(ad::sub(m.reward(in), b.reward_target)));
  L.duration = ad::mean(ad::square(ad::sub(m.duration(in), b.duration_target)));

  L.total = ad::add(ad::add(ad::add(ad::scale(L.phi, w.info), ad::scale(L.initiation, w.initiation)),
                            ad::add(ad::scale(L.transition, w.transition), ad::scale(L.reward, w.reward))),
                    ad::scale(L.duration, w.duration));
  return L;
}

struct TrainConfig {
  std::size_t steps = 20000;
  std::size_t batch_size = 16;
  double lr = 1e-4;
  LossWeights betas;
  double initiation_weight_cap = 100.0;
  std::size_t log_every = 100;
  std::string diagnostic_prefix;  // checkpoint written here if training diverges

  void validate() const {
    if (batch_size < 2) throw std::invalid_argument("train config: batch_size must be >= 2");
    if (!(lr > 0.0)) throw std::invalid_argument("train config: lr must be positive");
    if (log_every == 0) throw std::invalid_argument("train config: log_every must be positive");
    betas.validate();
  }

  nlohmann::json to_json() const {
    return {{"steps", steps},
            {"batch_size", batch_size},
            {"lr", lr},
            {"betas", {betas.info, betas.initiation, betas.transition, betas.reward, betas.duration}},
            {"initiation_weight_cap", initiation_weight_cap},
            {"log_every", log_every}};
  }
};

/// Window means of the per-step losses, one row per log_every steps.
struct TrainLogRow {
  std::size_t step = 0;
  double total = 0, phi = 0, initiation = 0, transition = 0, reward = 0, duration = 0;
  double mi_dynamics = 0, mi_grounding = 0;
};

inline void write_training_log(const std::vector<TrainLogRow>& log, const std::string& path) {
  csv::Writer w(path);
  w.header({"step", "loss_total", "loss_phi", "loss_I", "loss_T", "loss_R", "loss_tau", "mi_bound_1", "mi_bound_2"});
  for (const auto& r : log)
    w.row(std::vector<double>{static_cast<double>(r.step), r.total, r.phi, r.initiation, r.transition, r.reward,
                              r.duration, r.mi_dynamics, r.mi_grounding});
}

/// Owns the model, its optimizer and the sampling streams.
class Trainer {
 public:
  Trainer(const TrainingSet& ts, const ModelConfig& mcfg, const TrainConfig& tcfg, std::uint64_t seed)
      : ts_(ts), tcfg_(tcfg), batch_rng_(make_stream(seed, "model-batch")), noise_rng_(make_stream(seed, "model-noise")) {
    ts_.validate();
    tcfg_.validate();
    if (ts_.empty()) throw std::invalid_argument("train_model: dataset is empty");
    if (mcfg.obs_dim != ts_.obs_dim || mcfg.n_options != ts_.n_options)
      throw std::invalid_argument("train_model: model config does not match the dataset");
    auto init_rng = make_stream(seed, "model-init");
    model_ = AbstractModel(mcfg, init_rng);
    iw_ = initiation_weights(ts_, tcfg_.initiation_weight_cap);
    opt_.emplace(ad::tensors_of(model_.parameters()), ad::AdamConfig{.lr = tcfg_.lr});
  }

  /// One Adam step on a uniformly drawn batch; returns the step's losses.
  const Losses& step() {
    std::vector<std::size_t> idx(tcfg_.batch_size);
    for (auto& i : idx) i = uniform_index(batch_rng_, ts_.size());
    const Batch b = make_batch(ts_, model_, iw_, idx, noise_rng_);
    last_ = compute_losses(model_, b, tcfg_.betas);
    if (!std::isfinite(last_.total.item())) diverged("loss is not finite");
    opt_->zero_grad();
    ad::backward(last_.total);
    if (!opt_->step()) diverged("gradient is not finite");
    ++steps_;
    accumulate();
    return last_;
  }

  void run(std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) step();
  }

  const AbstractModel& model() const { return model_; }
  AbstractModel& model() { return model_; }
  const std::vector<TrainLogRow>& log() const { return log_; }
  const InitiationWeights& weights() const { return iw_; }
  std::size_t steps() const { return steps_; }

 private:
  void accumulate() {
    window_.step = steps_;
    window_.total += last_.total.item();
    window_.phi += last_.phi.item();
    window_.initiation += last_.initiation.item();
    window_.transition += last_.transition.item();
    window_.reward += last_.reward.item();
    window_.duration += last_.duration.item();
    window_.mi_dynamics += last_.mi_dynamics;
    window_.mi_grounding += last_.mi_grounding;
    if (steps_ % tcfg_.log_every == 0) {
      const double n = static_cast<double>(tcfg_.log_every);
      TrainLogRow r = window_;
      for (double* v : {&r.total, &r.phi, &r.initiation, &r.transition, &r.reward, &r.duration, &r.mi_dynamics,
                        &r.mi_grounding})
        *v /= n;
      log_.push_back(r);
      window_ = {};
    }
  }

  [[noreturn]] void diverged(const std::string& why) {
    std::string msg = "training diverged at step " + std::to_string(steps_) + ": " + why;
    if (!tcfg_.diagnostic_prefix.empty()) {
      ad::save_checkpoint(model_.parameters(), tcfg_.diagnostic_prefix, {{"diverged_at_step", steps_}});
      msg += " (diagnostic checkpoint " + tcfg_.diagnostic_prefix + ")";
    }
    throw std::runtime_error(msg);
  }

  const TrainingSet& ts_;
  TrainConfig tcfg_;
  Rng batch_rng_, noise_rng_;
  AbstractModel model_;
  InitiationWeights iw_;
  std::optional<ad::Adam> opt_;
  Losses last_;
  std::size_t steps_ = 0;
  TrainLogRow window_;
  std::vector<TrainLogRow> log_;
};

struct TrainResult {
  AbstractModel model;
  std::vector<TrainLogRow> log;
};

inline TrainResult train_model(const TrainingSet& ts, const ModelConfig& mcfg, const TrainConfig& tcfg,
                               std::uint64_t seed) {
  Trainer t(ts, mcfg, tcfg, seed);
  t.run(tcfg.steps);
  return {t.model(), t.log()};
}

/// Checkpoint with the architecture stored alongside, so it loads without
/// other configuration.
inline void save_model(const AbstractModel& m, const std::string& prefix, nlohmann::json extra = nlohmann::json::object()) {
  extra["model_config"] = m.config().to_json();
  ad::save_checkpoint(m.parameters(), prefix, extra);
}

inline AbstractModel load_model(const std::string& prefix) {
  std::ifstream in(prefix + ".json");
  if (!in) throw std::runtime_error("cannot open model checkpoint " + prefix + ".json");
  const auto manifest = nlohmann::json::parse(in);
  if (!manifest.contains("extra") || !manifest["extra"].contains("model_config"))
    throw std::runtime_error(prefix + ".json carries no model_config");
  auto rng = make_stream(0, "model-load");
  AbstractModel m(ModelConfig::from_json(manifest["extra"]["model_config"]), rng);
  auto p = m.parameters();
  ad::load_checkpoint(p, prefix);
  return m;
}

}  // namespace skillworld::model
