#pragma once

// Diagonal Gaussian mixtures: a fused log-density op and reparameterized
// sampling.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "skillworld/autodiff/nn.hpp"
#include "skillworld/autodiff/tensor.hpp"
#include "skillworld/util/rng.hpp"

namespace skillworld::ad {

inline constexpr double kStdFloor = 1e-4;

/// Per-row mixture parameters: logits (B x K), means and stds (B x K*D),
/// component k occupying columns [k*D, (k+1)*D).
struct MogParams {
  Tensor logits;
  Tensor means;
  Tensor stds;

  std::size_t components() const { return logits.cols(); }
  std::size_t dim() const { return means.cols() / logits.cols(); }
  std::size_t batch() const { return logits.rows(); }
};

inline void check_mog(const MogParams& p) {
  const std::size_t k = p.logits.cols();
  if (k == 0 || p.means.cols() % k != 0) throw std::invalid_argument("mog: means width must be K*D");
  if (p.stds.cols() != p.means.cols() || p.stds.rows() != p.means.rows() || p.means.rows() != p.logits.rows())
    throw std::invalid_argument("mog: inconsistent parameter shapes");
}

/// log sum_k w_k prod_d N(target_d; mu_kd, sigma_kd) per row, (B x 1).
/// Differentiable in all four inputs.
inline Tensor mog_log_prob(const MogParams& p, const Tensor& target) {
  check_mog(p);
  const std::size_t B = p.batch(), K = p.components(), D = p.dim();
  if (target.rows() != B || target.cols() != D)
    throw std::invalid_argument("mog_log_prob: target must be B x D with D=" + std::to_string(D));
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const auto& L = p.logits.values();
  const auto& M = p.means.values();
  const auto& S = p.stds.values();
  const auto& Y = target.values();
  std::vector<double> out(B);
  // Cached per row: mixture weights w and responsibilities r.
  std::vector<double> w(B * K), r(B * K), a(K);
  for (std::size_t i = 0; i < B; ++i) {
    double lmax = L[i * K];
    for (std::size_t k = 1; k < K; ++k) lmax = std::max(lmax, L[i * K + k]);
    double lsum = 0.0;
    for (std::size_t k = 0; k < K; ++k) lsum += std::exp(L[i * K + k] - lmax);
    const double lse = lmax + std::log(lsum);
    for (std::size_t k = 0; k < K; ++k) {
      w[i * K + k] = std::exp(L[i * K + k] - lse);
      double c = L[i * K + k] - lse;
      for (std::size_t d = 0; d < D; ++d) {
        const double sd = S[i * K * D + k * D + d];
        const double u = (Y[i * D + d] - M[i * K * D + k * D + d]) / sd;
        c += -0.5 * u * u - std::log(sd) - half_log_2pi;
      }
      a[k] = c;
    }
    double amax = a[0];
    for (std::size_t k = 1; k < K; ++k) amax = std::max(amax, a[k]);
    double asum = 0.0;
    for (std::size_t k = 0; k < K; ++k) asum += std::exp(a[k] - amax);
    out[i] = amax + std::log(asum);
    for (std::size_t k = 0; k < K; ++k) r[i * K + k] = std::exp(a[k] - out[i]);
  }
  return detail::make_result(
      B, 1, std::move(out), {p.logits, p.means, p.stds, target}, "mog_log_prob",
      [B, K, D, w = std::move(w), r = std::move(r)](Node& self) {
        Node& NL = *self.parents[0];
        Node& NM = *self.parents[1];
        Node& NS = *self.parents[2];
        Node& NY = *self.parents[3];
        for (std::size_t i = 0; i < B; ++i) {
          const double g = self.grad[i];
          if (NL.requires_grad) {
            auto& gl = NL.ensure_grad();
            for (std::size_t k = 0; k < K; ++k) gl[i * K + k] += g * (r[i * K + k] - w[i * K + k]);
          }
          for (std::size_t k = 0; k < K; ++k) {
            const double rk = r[i * K + k];
            for (std::size_t d = 0; d < D; ++d) {
              const std::size_t j = i * K * D + k * D + d;
              const double sd = NS.value[j];
              const double diff = NY.value[i * D + d] - NM.value[j];
              const double dmu = rk * diff / (sd * sd);
              if (NM.requires_grad) NM.ensure_grad()[j] += g * dmu;
              if (NS.requires_grad) NS.ensure_grad()[j] += g * rk * (diff * diff / (sd * sd * sd) - 1.0 / sd);
              if (NY.requires_grad) NY.ensure_grad()[i * D + d] -= g * dmu;
            }
          }
        }
      });
}

/// Mixture weights of row i (no gradient).
inline std::vector<double> mog_weights(const MogParams& p, std::size_t i) {
  const std::size_t K = p.components();
  const double* l = p.logits.values().data() + i * K;
  double mx = l[0];
  for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, l[k]);
  std::vector<double> w(K);
  double s = 0.0;
  for (std::size_t k = 0; k < K; ++k) s += (w[k] = std::exp(l[k] - mx));
  for (auto& x : w) x /= s;
  return w;
}

/// One draw per row: component from the mixture weights, then mean + std*eps.
/// The result is built from differentiable ops, so gradients flow through the
/// selected component's mean and std.
inline Tensor mog_sample(const MogParams& p, Rng& rng) {
  check_mog(p);
  const std::size_t B = p.batch(), K = p.components(), D = p.dim();
  std::vector<double> eps(B * K * D, 0.0), mask(B * K * D, 0.0);
  for (std::size_t i = 0; i < B; ++i) {
    const auto w = mog_weights(p, i);
    const std::size_t k = sample_discrete(rng, std::span<const double>(w));
    for (std::size_t d = 0; d < D; ++d) {
      eps[i * K * D + k * D + d] = standard_normal(rng);
      mask[i * K * D + k * D + d] = 1.0;
    }
  }
  const Tensor E = Tensor::from(B, K * D, std::move(eps));
  const Tensor Mk = Tensor::from(B, K * D, std::move(mask));
  return block_sum(mul(add(p.means, mul(p.stds, E)), Mk), D);
}

/// Unnormalized std parameters to stds with a positive floor.
inline Tensor positive_std(const Tensor& raw) { return add_scalar(softplus(raw), kStdFloor); }

/// MLP trunk emitting K logits, K*D means and K*D raw stds. With a residual
/// base z, component means are z + delta_k.
struct MogHead {
  MLP trunk;
  std::size_t components = 4;
  std::size_t dim = 1;

  MogHead() = default;
  MogHead(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t d, std::size_t k, Rng& rng,
          Activation act = Activation::kRelu)
      : trunk(in, hidden, k + 2 * k * d, rng, act), components(k), dim(d) {}

  MogParams operator()(const Tensor& context, const Tensor* residual_base = nullptr) const {
    const Tensor h = trunk(context);
    const std::size_t K = components, KD = components * dim;
    MogParams p;
    p.logits = slice_cols(h, 0, K);
    p.means = slice_cols(h, K, KD);
    if (residual_base) {
      if (residual_base->cols() != dim || residual_base->rows() != context.rows())
        throw std::invalid_argument("mog head: residual base must be B x D");
      p.means = add(p.means, tile_cols(*residual_base, K));
    }
    p.stds = positive_std(slice_cols(h, K + KD, KD));
    return p;
  }

  void collect(const std::string& prefix, NamedParams& out) const { trunk.collect(prefix, out); }
};

}  // namespace skillworld::ad
