#pragma once

// Abstract model: encoder phi, mixture transition head, initiation, reward
// and duration heads, and the two contrastive critics.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skillworld/autodiff/mog.hpp"
#include "skillworld/autodiff/nn.hpp"
#include "skillworld/autodiff/tensor.hpp"
#include "skillworld/autodiff/transforms.hpp"
#include "skillworld/util/rng.hpp"

namespace skillworld::model {

using ad::Tensor;

struct ModelConfig {
  std::size_t obs_dim = 4;
  std::size_t n_options = 4;
  std::size_t d_z = 4;
  std::size_t mog_components = 4;
  std::vector<std::size_t> hidden{128, 128};
  std::size_t critic_hidden = 64;
  std::size_t critic_embed = 32;
  double sigma_enc = 0.1;
  ad::Activation activation = ad::Activation::kRelu;

  void validate() const {
    if (obs_dim == 0 || n_options == 0 || d_z == 0 || mog_components == 0 || critic_embed == 0)
      throw std::invalid_argument("model config: dimensions must be positive");
    if (!(sigma_enc >= 0.0)) throw std::invalid_argument("model config: sigma_enc must be >= 0");
  }

  nlohmann::json to_json() const {
    return {{"obs_dim", obs_dim},       {"n_options", n_options},         {"d_z", d_z},
            {"mog_components", mog_components}, {"hidden", hidden},       {"critic_hidden", critic_hidden},
            {"critic_embed", critic_embed},     {"sigma_enc", sigma_enc},         {"activation", ad::to_string(activation)}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.obs_dim = j.at("obs_dim").get<std::size_t>();
    c.n_options = j.at("n_options").get<std::size_t>();
    c.d_z = j.at("d_z").get<std::size_t>();
    c.mog_components = j.at("mog_components").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    c.critic_hidden = j.at("critic_hidden").get<std::size_t>();
    c.critic_embed = j.at("critic_embed").get<std::size_t>();
    c.sigma_enc = j.at("sigma_enc").get<double>();
    c.activation = ad::parse_activation(j.value("activation", "relu"));
    c.validate();
    return c;
  }
};

/// Separable bilinear score u(ctx)^T W v(tgt).
struct Critic {
  ad::MLP ctx_net;
  ad::MLP tgt_net;
  Tensor W;

  Critic() = default;
  Critic(std::size_t ctx_dim, std::size_t tgt_dim, std::size_t hidden, std::size_t embed, Rng& rng)
      : ctx_net(ctx_dim, {hidden}, embed, rng), tgt_net(tgt_dim, {hidden}, embed, rng) {
    std::vector<double> w(embed * embed, 0.0);
    for (std::size_t i = 0; i < embed; ++i) w[i * embed + i] = 1.0 / std::sqrt(static_cast<double>(embed));
    W = Tensor::from(embed, embed, std::move(w), true);
  }

  /// (B x B) score matrix; entry (i, j) scores context i against target j.
  Tensor scores(const Tensor& ctx, const Tensor& tgt) const {
    return ad::matmul_nt(ad::matmul(ctx_net(ctx), W), tgt_net(tgt));
  }

  void collect(const std::string& prefix, ad::NamedParams& out) const {
    ctx_net.collect(prefix + ".ctx", out);
    tgt_net.collect(prefix + ".tgt", out);
    out.emplace_back(prefix + ".W", W);
  }
};

/// mean_i [S_ii - log((1/B) sum_j exp S_ij)]; never exceeds log B.
inline Tensor infonce_bound(const Tensor& scores) {
  const std::size_t B = scores.rows();
  if (B < 2 || scores.cols() != B) throw std::invalid_argument("infonce: need a square score matrix with B >= 2");
  return ad::add_scalar(ad::mean(ad::sub(ad::diagonal(scores), ad::logsumexp_rows(scores))),
                        std::log(static_cast<double>(B)));
}

class AbstractModel {
 public:
  AbstractModel() = default;
  AbstractModel(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    const auto& h = cfg_.hidden;
    const std::size_t dz = cfg_.d_z, O = cfg_.n_options;
    encoder = ad::MLP(cfg_.obs_dim, h, dz, rng, cfg_.activation);
    transition = ad::MogHead(dz + O, h, dz, cfg_.mog_components, rng, cfg_.activation);
    initiation = ad::MLP(dz, h, O, rng, cfg_.activation);
    reward = ad::MLP(reward_input_dim(), h, 1, rng, cfg_.activation);
    duration = ad::MLP(reward_input_dim(), h, 1, rng, cfg_.activation);
    critic_dynamics = Critic(dz + O, dz, cfg_.critic_hidden, cfg_.critic_embed, rng);
    critic_grounding = Critic(cfg_.obs_dim, dz, cfg_.critic_hidden, cfg_.critic_embed, rng);
  }

  const ModelConfig& config() const { return cfg_; }
  std::size_t d_z() const { return cfg_.d_z; }
  std::size_t n_options() const { return cfg_.n_options; }
  /// Reserved previous-option index for the first step of a trajectory.
  std::size_t o_bot() const { return cfg_.n_options; }
  std::size_t reward_input_dim() const { return 2 * cfg_.d_z + 2 * cfg_.n_options + 1; }

  ad::NamedParams parameters() const {
    ad::NamedParams out;
    encoder.collect("encoder", out);
    transition.collect("transition", out);
    initiation.collect("initiation", out);
    reward.collect("reward", out);
    duration.collect("duration", out);
    critic_dynamics.collect("critic_dynamics", out);
    critic_grounding.collect("critic_grounding", out);
    return out;
  }

  /// z = phi(obs), plus sigma_enc * noise when noise is given (training mode).
  Tensor encode(const Tensor& obs, const Tensor* noise = nullptr) const {
    if (obs.cols() != cfg_.obs_dim)
      throw std::invalid_argument("encode: observation has " + std::to_string(obs.cols()) + " columns, expected " +
                                  std::to_string(cfg_.obs_dim));
    Tensor z = encoder(obs);
    if (noise && cfg_.sigma_enc > 0.0) z = ad::add(z, ad::scale(*noise, cfg_.sigma_enc));
    return z;
  }

  /// Draws the training-mode noise for B rows.
  Tensor sample_noise(std::size_t B, Rng& rng) const {
    std::vector<double> v(B * cfg_.d_z);
    for (auto& x : v) x = standard_normal(rng);
    return Tensor::from(B, cfg_.d_z, std::move(v));
  }

  Tensor transition_context(const Tensor& z, const std::vector<std::size_t>& options) const {
    return ad::concat_cols({z, ad::one_hot(options, cfg_.n_options)});
  }

  ad::MogParams transition_params(const Tensor& z, const std::vector<std::size_t>& options) const {
    return transition(transition_context(z, options), &z);
  }

  Tensor initiation_logits(const Tensor& z) const { return initiation(z); }

  /// Input row (z_prev, onehot(o_prev) over O+1, z, onehot(o)).
  Tensor reward_input(const Tensor& z_prev, const std::vector<std::size_t>& o_prev, const Tensor& z,
                      const std::vector<std::size_t>& options) const {
    return ad::concat_cols(
        {z_prev, ad::one_hot(o_prev, cfg_.n_options + 1), z, ad::one_hot(options, cfg_.n_options)});
  }

  // Decoded single-row predictions used by planning.

  std::vector<double> initiation_probs(const std::vector<double>& z) const {
    ad::NoGradGuard ng;
    const auto l = initiation(row(z));
    std::vector<double> p(cfg_.n_options);
    for (std::size_t o = 0; o < p.size(); ++o) p[o] = ad::sigmoid_scalar(l.values()[o]);
    return p;
  }

  /// Returns (reward, duration) decoded by symexp and exp; duration >= 1.
  std::pair<double, double> reward_duration(const std::vector<double>& z_prev, std::size_t o_prev,
                                            const std::vector<double>& z, std::size_t o) const {
    ad::NoGradGuard ng;
    const auto in = reward_input(row(z_prev), {o_prev}, row(z), {o});
    const double r = ad::symexp(reward(in).item());
    const double tau = std::max(1.0, std::exp(duration(in).item()));
    return {r, tau};
  }

  std::vector<double> sample_next(const std::vector<double>& z, std::size_t o, Rng& rng) const {
    ad::NoGradGuard ng;
    const auto p = transition_params(row(z), {o});
    return ad::mog_sample(p, rng).values();
  }

  // Batched forms over B rows stored row-major.

  std::vector<double> initiation_probs_batch(const std::vector<double>& z, std::size_t B) const {
    ad::NoGradGuard ng;
    auto p = initiation(Tensor::from(B, cfg_.d_z, z)).values();
    for (auto& x : p) x = ad::sigmoid_scalar(x);
    return p;
  }

  void reward_duration_batch(const std::vector<double>& z_prev, const std::vector<std::size_t>& o_prev,
                             const std::vector<double>& z, const std::vector<std::size_t>& options,
                             std::vector<double>& r, std::vector<double>& tau) const {
    ad::NoGradGuard ng;
    const std::size_t B = options.size();
    const auto in = reward_input(Tensor::from(B, cfg_.d_z, z_prev), o_prev, Tensor::from(B, cfg_.d_z, z), options);
    r = reward(in).values();
    tau = duration(in).values();
    for (auto& x : r) x = ad::symexp(x);
    for (auto& x : tau) x = std::max(1.0, std::exp(x));
  }

  std::vector<double> sample_next_batch(const std::vector<double>& z, const std::vector<std::size_t>& options,
                                        Rng& rng) const {
    ad::NoGradGuard ng;
    const auto p = transition_params(Tensor::from(options.size(), cfg_.d_z, z), options);
    return ad::mog_sample(p, rng).values();
  }

  std::vector<double> encode_one(const std::vector<double>& obs) const {
    ad::NoGradGuard ng;
    return encode(row(obs)).values();
  }

  ad::MLP encoder;
  ad::MogHead transition;
  ad::MLP initiation;
  ad::MLP reward;
  ad::MLP duration;
  Critic critic_dynamics;   // MI(Z'; Z, O)
  Critic critic_grounding;  // MI(S'; Z')

 private:
  static Tensor row(const std::vector<double>& v) { return Tensor::from(1, v.size(), v); }
  ModelConfig cfg_;
};

}  // namespace skillworld::model
