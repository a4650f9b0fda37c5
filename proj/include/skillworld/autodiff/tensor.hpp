#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
// Every tensor is 2-D (rows x cols); scalars are 1x1.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace skillworld::ad {

struct Node {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first needed
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;
  const char* op = "leaf";

  std::size_t size() const { return value.size(); }
  std::vector<double>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

namespace detail {
inline thread_local bool grad_enabled = true;
inline thread_local std::vector<std::vector<unsigned char>>* relu_recorder = nullptr;
}  // namespace detail

/// Disables graph recording in its scope (inference paths).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// Records every relu activation pattern evaluated in its scope; used by
/// finite-difference checks to skip coordinates whose step crosses a kink.
class ReluPatternRecorder {
 public:
  ReluPatternRecorder() : prev_(detail::relu_recorder) { detail::relu_recorder = &patterns_; }
  ~ReluPatternRecorder() { detail::relu_recorder = prev_; }
  ReluPatternRecorder(const ReluPatternRecorder&) = delete;
  ReluPatternRecorder& operator=(const ReluPatternRecorder&) = delete;
  const std::vector<std::vector<unsigned char>>& patterns() const { return patterns_; }

 private:
  std::vector<std::vector<unsigned char>> patterns_;
  std::vector<std::vector<unsigned char>>* prev_;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad = false) {
    if (values.size() != rows * cols) throw std::invalid_argument("tensor: value count does not match shape");
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }
  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false) {
    return from(rows, cols, std::vector<double>(rows * cols, 0.0), requires_grad);
  }
  static Tensor full(std::size_t rows, std::size_t cols, double v) {
    return from(rows, cols, std::vector<double>(rows * cols, v));
  }
  static Tensor scalar(double v) { return from(1, 1, {v}); }

  bool defined() const { return static_cast<bool>(node_); }
  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->value.size(); }
  const std::vector<double>& values() const { return node_->value; }
  std::vector<double>& mutable_values() { return node_->value; }
  const std::vector<double>& grad() const { return node_->grad; }
  std::vector<double>& mutable_grad() { return node_->ensure_grad(); }
  double at(std::size_t r, std::size_t c) const { return node_->value[r * node_->cols + c]; }
  double item() const {
    if (size() != 1) throw std::invalid_argument("item() on a non-scalar tensor");
    return node_->value[0];
  }
  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }
  const std::shared_ptr<Node>& node() const { return node_; }

  /// Value copy that is cut from the graph.
  Tensor detach() const { return from(rows(), cols(), values()); }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

inline Tensor make_result(std::size_t rows, std::size_t cols, std::vector<double>&& value,
                          std::initializer_list<Tensor> parents, const char* op,
                          std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value = std::move(value);
  n->op = op;
  if (grad_enabled) {
    bool any = false;
    for (const auto& p : parents) any |= p.requires_grad();
    if (any) {
      n->requires_grad = true;
      for (const auto& p : parents) n->parents.push_back(p.node());
      n->backward_fn = std::move(backward);
    }
  }
  return Tensor(std::move(n));
}

inline Tensor make_result_vec(std::size_t rows, std::size_t cols, std::vector<double>&& value,
                              const std::vector<Tensor>& parents, const char* op,
                              std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value = std::move(value);
  n->op = op;
  if (grad_enabled) {
    bool any = false;
    for (const auto& p : parents) any |= p.requires_grad();
    if (any) {
      n->requires_grad = true;
      for (const auto& p : parents) n->parents.push_back(p.node());
      n->backward_fn = std::move(backward);
    }
  }
  return Tensor(std::move(n));
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

inline CMapMat cmap(const std::vector<double>& v, std::size_t r, std::size_t c) {
  return CMapMat(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
inline MapMat map(std::vector<double>& v, std::size_t r, std::size_t c) {
  return MapMat(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

template <class F, class DF>
Tensor unary(const Tensor& a, const char* op, F f, DF df) {
  std::vector<double> out(a.size());
  const auto& x = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  return make_result(a.rows(), a.cols(), std::move(out), {a}, op, [df](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(p.value[i], self.value[i]);
  });
}

}  // namespace detail

/// Accumulates d loss / d leaf into every reachable leaf's grad.
inline void backward(const Tensor& loss) {
  if (loss.size() != 1) throw std::invalid_argument("backward: loss must be a scalar");
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, bool>> stack{{loss.node().get(), false}};
  while (!stack.empty()) {
    auto [n, expanded] = stack.back();
    stack.pop_back();
    if (expanded) {
      order.push_back(n);
      continue;
    }
    if (!seen.insert(n).second) continue;
    stack.push_back({n, true});
    for (const auto& p : n->parents)
      if (p->requires_grad && !seen.count(p.get())) stack.push_back({p.get(), false});
  }
  // Intermediate gradients restart from zero; leaves accumulate.
  for (Node* n : order)
    if (n->backward_fn) n->grad.assign(n->value.size(), 0.0);
  loss.node()->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

// ---------------------------------------------------------------------------
// Linear algebra

/// (m x k) * (k x n)
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n);
  detail::map(out, m, n).noalias() = detail::cmap(a.values(), m, k) * detail::cmap(b.values(), k, n);
  return detail::make_result(m, n, std::move(out), {a, b}, "matmul", [m, k, n](Node& self) {
    Node& A = *self.parents[0];
    Node& B = *self.parents[1];
    const auto dC = detail::cmap(self.grad, m, n);
    if (A.requires_grad) detail::map(A.ensure_grad(), m, k).noalias() += dC * detail::cmap(B.value, k, n).transpose();
    if (B.requires_grad) detail::map(B.ensure_grad(), k, n).noalias() += detail::cmap(A.value, m, k).transpose() * dC;
  });
}

/// (m x k) * (n x k)^T
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimensions differ");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<double> out(m * n);
  detail::map(out, m, n).noalias() = detail::cmap(a.values(), m, k) * detail::cmap(b.values(), n, k).transpose();
  return detail::make_result(m, n, std::move(out), {a, b}, "matmul_nt", [m, k, n](Node& self) {
    Node& A = *self.parents[0];
    Node& B = *self.parents[1];
    const auto dC = detail::cmap(self.grad, m, n);
    if (A.requires_grad) detail::map(A.ensure_grad(), m, k).noalias() += dC * detail::cmap(B.value, n, k);
    if (B.requires_grad) detail::map(B.ensure_grad(), n, k).noalias() += dC.transpose() * detail::cmap(A.value, m, k);
  });
}

/// x (m x n) + b (1 x n) broadcast over rows.
inline Tensor add_bias(const Tensor& x, const Tensor& b) {
  if (b.rows() != 1 || b.cols() != x.cols()) throw std::invalid_argument("add_bias: bias must be 1 x cols");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out = x.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += b.values()[j];
  return detail::make_result(m, n, std::move(out), {x, b}, "add_bias", [m, n](Node& self) {
    Node& X = *self.parents[0];
    Node& B = *self.parents[1];
    if (X.requires_grad) {
      auto& g = X.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (B.requires_grad) {
      auto& g = B.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise binary

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return detail::make_result(a.rows(), a.cols(), std::move(out), {a, b}, "add", [](Node& self) {
    for (int k = 0; k < 2; ++k) {
      Node& p = *self.parents[static_cast<std::size_t>(k)];
      if (!p.requires_grad) continue;
      auto& g = p.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return detail::make_result(a.rows(), a.cols(), std::move(out), {a, b}, "sub", [](Node& self) {
    Node& A = *self.parents[0];
    Node& B = *self.parents[1];
    if (A.requires_grad) {
      auto& g = A.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (B.requires_grad) {
      auto& g = B.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return detail::make_result(a.rows(), a.cols(), std::move(out), {a, b}, "mul", [](Node& self) {
    Node& A = *self.parents[0];
    Node& B = *self.parents[1];
    if (A.requires_grad) {
      auto& g = A.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * B.value[i];
    }
    if (B.requires_grad) {
      auto& g = B.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * A.value[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double c) {
  return detail::unary(a, "scale", [c](double x) { return c * x; }, [c](double, double) { return c; });
}

inline Tensor add_scalar(const Tensor& a, double c) {
  return detail::unary(a, "add_scalar", [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

// ---------------------------------------------------------------------------
// Elementwise unary

inline Tensor relu(const Tensor& a) {
  if (detail::relu_recorder) {
    std::vector<unsigned char> pattern(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) pattern[i] = a.values()[i] > 0.0;
    detail::relu_recorder->push_back(std::move(pattern));
  }
  return detail::unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 + exp(x)) without overflow.
inline double softplus_scalar(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary(a, "sigmoid", sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

inline Tensor softplus(const Tensor& a) {
  return detail::unary(a, "softplus", softplus_scalar, [](double x, double) { return sigmoid_scalar(x); });
}

inline Tensor silu(const Tensor& a) {
  return detail::unary(
      a, "silu", [](double x) { return x * sigmoid_scalar(x); },
      [](double x, double) {
        const double s = sigmoid_scalar(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

inline Tensor tanh(const Tensor& a) {
  return detail::unary(a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Tensor exp(const Tensor& a) {
  return detail::unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& a) {
  return detail::unary(a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Tensor square(const Tensor& a) {
  return detail::unary(a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

/// 0.5 x^2 for |x| <= delta, delta (|x| - delta / 2) beyond.
inline Tensor huber(const Tensor& a, double delta = 1.0) {
  return detail::unary(
      a, "huber",
      [delta](double x) { return std::fabs(x) <= delta ? 0.5 * x * x : delta * (std::fabs(x) - 0.5 * delta); },
      [delta](double x, double) { return std::clamp(x, -delta, delta); });
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  return detail::make_result(1, 1, {s}, {a}, "sum", [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (auto& x : g) x += self.grad[0];
  });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

/// Row sums: (m x n) -> (m x 1).
inline Tensor sum_cols(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += a.values()[i * n + j];
  return detail::make_result(m, 1, std::move(out), {a}, "sum_cols", [m, n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i];
  });
}

/// Row-wise log-sum-exp: (m x n) -> (m x 1).
inline Tensor logsumexp_rows(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = a.values().data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(row[j] - mx);
    out[i] = mx + std::log(s);
  }
  return detail::make_result(m, 1, std::move(out), {a}, "logsumexp_rows", [m, n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i] * std::exp(p.value[i * n + j] - self.value[i]);
  });
}

// ---------------------------------------------------------------------------
// Shape ops

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    if (p.rows() != m) throw std::invalid_argument("concat_cols: row counts differ");
    widths.push_back(p.cols());
    n += p.cols();
  }
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      std::copy_n(p.values().data() + i * p.cols(), p.cols(), out.data() + i * n + off);
      off += p.cols();
    }
  }
  return detail::make_result_vec(m, n, std::move(out), parts, "concat_cols", [m, n, widths](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = *self.parents[k];
      const std::size_t w = widths[k];
      if (p.requires_grad) {
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < w; ++j) g[i * w + j] += self.grad[i * n + off + j];
      }
      off += w;
    }
  });
}

inline Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
  if (start + count > a.cols()) throw std::invalid_argument("slice_cols: range out of bounds");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i) std::copy_n(a.values().data() + i * n + start, count, out.data() + i * count);
  return detail::make_result(m, count, std::move(out), {a}, "slice_cols", [m, n, start, count](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) g[i * n + start + j] += self.grad[i * count + j];
  });
}

/// Rows [start, start + count).
inline Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count) {
  if (start + count > a.rows()) throw std::invalid_argument("slice_rows: range out of bounds");
  const std::size_t n = a.cols();
  std::vector<double> out(a.values().begin() + static_cast<std::ptrdiff_t>(start * n),
                          a.values().begin() + static_cast<std::ptrdiff_t>((start + count) * n));
  return detail::make_result(count, n, std::move(out), {a}, "slice_rows", [n, start](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[start * n + i] += self.grad[i];
  });
}

/// out[i] = a[i, idx[i]]: (m x n) -> (m x 1).
inline Tensor gather_cols(const Tensor& a, const std::vector<std::size_t>& idx) {
  const std::size_t m = a.rows(), n = a.cols();
  if (idx.size() != m) throw std::invalid_argument("gather_cols: one index per row required");
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (idx[i] >= n) throw std::invalid_argument("gather_cols: index out of range");
    out[i] = a.values()[i * n + idx[i]];
  }
  return detail::make_result(m, 1, std::move(out), {a}, "gather_cols", [n, idx](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i) g[i * n + idx[i]] += self.grad[i];
  });
}

/// Diagonal of a square matrix as a column.
inline Tensor diagonal(const Tensor& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("diagonal: matrix must be square");
  const std::size_t m = a.rows();
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) out[i] = a.values()[i * m + i];
  return detail::make_result(m, 1, std::move(out), {a}, "diagonal", [m](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < m; ++i) g[i * m + i] += self.grad[i];
  });
}

/// [a a ... a] with k copies side by side.
inline Tensor tile_cols(const Tensor& a, std::size_t k) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n * k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t c = 0; c < k; ++c) std::copy_n(a.values().data() + i * n, n, out.data() + i * n * k + c * n);
  return detail::make_result(m, n * k, std::move(out), {a}, "tile_cols", [m, n, k](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t c = 0; c < k; ++c)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i * n * k + c * n + j];
  });
}

/// Sum of the consecutive column blocks of the given width.
inline Tensor block_sum(const Tensor& a, std::size_t width) {
  if (width == 0 || a.cols() % width != 0) throw std::invalid_argument("block_sum: width must divide cols");
  const std::size_t m = a.rows(), n = a.cols(), k = n / width;
  std::vector<double> out(m * width, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t c = 0; c < k; ++c)
      for (std::size_t j = 0; j < width; ++j) out[i * width + j] += a.values()[i * n + c * width + j];
  return detail::make_result(m, width, std::move(out), {a}, "block_sum", [m, n, k, width](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t c = 0; c < k; ++c)
        for (std::size_t j = 0; j < width; ++j) g[i * n + c * width + j] += self.grad[i * width + j];
  });
}

// ---------------------------------------------------------------------------
// Convenience

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }

}  // namespace skillworld::ad
