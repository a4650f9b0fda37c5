#pragma once

// Dense layers, MLPs and named parameter lists.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "skillworld/autodiff/tensor.hpp"
#include "skillworld/util/rng.hpp"

namespace skillworld::ad {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

inline std::vector<Tensor> tensors_of(const NamedParams& named) {
  std::vector<Tensor> out;
  out.reserve(named.size());
  for (const auto& [_, t] : named) out.push_back(t);
  return out;
}

inline void zero_grads(const NamedParams& named) {
  for (auto [_, t] : named) t.zero_grad();
}

enum class Activation { kRelu, kSilu, kTanh };

inline Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "silu") return Activation::kSilu;
  if (s == "tanh") return Activation::kTanh;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kSilu: return "silu";
    case Activation::kTanh: return "tanh";
  }
  throw std::logic_error("unreachable activation");
}

inline Tensor activate(const Tensor& x, Activation a) {
  switch (a) {
    case Activation::kRelu: return relu(x);
    case Activation::kSilu: return silu(x);
    case Activation::kTanh: return tanh(x);
  }
  throw std::logic_error("unreachable activation");
}

/// y = x W + b with W stored (in x out). Uniform(-1/sqrt(in), 1/sqrt(in))
/// initialization for both W and b.
struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng) {
    if (in == 0 || out == 0) throw std::invalid_argument("linear layer needs positive dimensions");
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::vector<double> w(in * out), b(out);
    for (auto& v : w) v = uniform(rng, -bound, bound);
    for (auto& v : b) v = uniform(rng, -bound, bound);
    weight = Tensor::from(in, out, std::move(w), true);
    bias = Tensor::from(1, out, std::move(b), true);
  }

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }

  Tensor operator()(const Tensor& x) const {
    if (x.cols() != in_dim())
      throw std::invalid_argument("linear: input has " + std::to_string(x.cols()) + " columns, expected " +
                                  std::to_string(in_dim()));
    return add_bias(matmul(x, weight), bias);
  }

  void collect(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
  }
};

/// Fully connected stack; activation between layers, none after the last.
struct MLP {
  std::vector<Linear> layers;
  Activation activation = Activation::kRelu;

  MLP() = default;
  MLP(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, Rng& rng,
      Activation act = Activation::kRelu)
      : activation(act) {
    std::size_t prev = in;
    for (std::size_t h : hidden) {
      layers.emplace_back(prev, h, rng);
      prev = h;
    }
    layers.emplace_back(prev, out, rng);
  }

  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }

  Tensor operator()(Tensor x) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = layers[i](x);
      if (i + 1 < layers.size()) x = activate(x, activation);
    }
    return x;
  }

  void collect(const std::string& prefix, NamedParams& out) const {
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(prefix + "." + std::to_string(i), out);
  }
};

/// Independent copy with the same values (e.g. a target network).
inline Linear deep_copy(const Linear& l) {
  Linear c;
  c.weight = Tensor::from(l.weight.rows(), l.weight.cols(), l.weight.values(), true);
  c.bias = Tensor::from(l.bias.rows(), l.bias.cols(), l.bias.values(), true);
  return c;
}

inline MLP deep_copy(const MLP& m) {
  MLP c;
  c.activation = m.activation;
  for (const auto& l : m.layers) c.layers.push_back(deep_copy(l));
  return c;
}

/// (m x k) one-hot rows.
inline Tensor one_hot(const std::vector<std::size_t>& idx, std::size_t k) {
  std::vector<double> v(idx.size() * k, 0.0);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= k) throw std::invalid_argument("one_hot: index out of range");
    v[i * k + idx[i]] = 1.0;
  }
  return Tensor::from(idx.size(), k, std::move(v));
}

/// Stacks equal-length rows into a constant (m x n) tensor.
inline Tensor stack_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: no rows");
  const std::size_t n = rows[0].size();
  std::vector<double> v;
  v.reserve(rows.size() * n);
  for (const auto& r : rows) {
    if (r.size() != n) throw std::invalid_argument("stack_rows: ragged rows");
    v.insert(v.end(), r.begin(), r.end());
  }
  return Tensor::from(rows.size(), n, std::move(v));
}

/// Copies values between identically shaped parameter lists.
inline void copy_values(const NamedParams& from, NamedParams& to) {
  if (from.size() != to.size()) throw std::invalid_argument("copy_values: parameter counts differ");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i].second.rows() != to[i].second.rows() || from[i].second.cols() != to[i].second.cols())
      throw std::invalid_argument("copy_values: shape mismatch at " + from[i].first);
    to[i].second.mutable_values() = from[i].second.values();
  }
}

}  // namespace skillworld::ad
