#pragma once

// Knowledge-fusion layer: additive-attention pooling of triple element
// vectors, memory assembly with a sentinel row, and the residual attention
// read  I = H + softmax(Q K^T) V  with Q = H Wq, K = C Wk, V = C Wv.
//
// Forward passes are templates so the same code runs in double (production,
// analytic gradients) and long double (finite-difference reference).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ckprobe/errors.hpp"

namespace ckprobe {

template <typename T>
class BasicMatrix {
 public:
  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("matrix data has " + std::to_string(data_.size()) +
                           " entries, expected " + std::to_string(rows_ * cols_));
    }
  }

  template <typename U>
  static BasicMatrix cast(const BasicMatrix<U>& other) {
    std::vector<T> data(other.data().begin(), other.data().end());
    return BasicMatrix(other.rows(), other.cols(), std::move(data));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  friend bool operator==(const BasicMatrix&, const BasicMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Matrix = BasicMatrix<double>;

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " times " + std::to_string(b.rows()) +
                         "x" + std::to_string(b.cols()));
  }
  BasicMatrix<T> out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const T aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

template <typename T>
BasicMatrix<T> transpose(const BasicMatrix<T>& a) {
  BasicMatrix<T> out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  }
  return out;
}

/// Numerically stable softmax: the maximum is subtracted before exp.
template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
  std::vector<T> out(logits.begin(), logits.end());
  if (out.empty()) return out;
  const T max = *std::max_element(out.begin(), out.end());
  T sum = 0;
  for (T& x : out) {
    x = std::exp(x - max);
    sum += x;
  }
  for (T& x : out) x /= sum;
  return out;
}

template <typename T>
BasicMatrix<T> softmax_rows(const BasicMatrix<T>& logits) {
  BasicMatrix<T> out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = softmax<T>(logits.row(i));
    std::copy(row.begin(), row.end(), out.row(i).begin());
  }
  return out;
}

template <typename T>
struct BasicPoolParams {
  BasicMatrix<T> projection;  // d_e x d_a
  std::vector<T> bias;        // d_a
  std::vector<T> scorer;      // d_a

  template <typename U>
  static BasicPoolParams cast(const BasicPoolParams<U>& p) {
    return {BasicMatrix<T>::cast(p.projection),
            std::vector<T>(p.bias.begin(), p.bias.end()),
            std::vector<T>(p.scorer.begin(), p.scorer.end())};
  }
};
using PoolParams = BasicPoolParams<double>;

template <typename T>
struct PoolTrace {
  BasicMatrix<T> hidden;  // m x d_a, tanh(E W + b)
  std::vector<T> weights;  // m, softmax of the scores
  std::vector<T> output;   // d_e
};

template <typename T>
PoolTrace<T> attention_pool_trace(const BasicMatrix<T>& elements,
                                  const BasicPoolParams<T>& p) {
  const std::size_t m = elements.rows();
  const std::size_t de = elements.cols();
  const std::size_t da = p.projection.cols();
  if (m == 0) throw DimensionError("attention_pool needs at least one element");
  if (p.projection.rows() != de || p.bias.size() != da || p.scorer.size() != da) {
    throw DimensionError("attention_pool: parameter shapes do not match d_e=" +
                         std::to_string(de));
  }
  PoolTrace<T> t;
  t.hidden = matmul(elements, p.projection);
  std::vector<T> scores(m, T(0));
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t a = 0; a < da; ++a) {
      t.hidden(j, a) = std::tanh(t.hidden(j, a) + p.bias[a]);
      scores[j] += p.scorer[a] * t.hidden(j, a);
    }
  }
  t.weights = softmax<T>(scores);
  t.output.assign(de, T(0));
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t c = 0; c < de; ++c) t.output[c] += t.weights[j] * elements(j, c);
  }
  return t;
}

/// score_j = scorer . tanh(projection^T e_j + bias); output = sum_j softmax_j e_j.
template <typename T>
std::vector<T> attention_pool(const BasicMatrix<T>& elements, const BasicPoolParams<T>& p) {
  return attention_pool_trace(elements, p).output;
}

/// Rows 0..m-1 are the pooled triples in order, row m is the sentinel.
template <typename T>
BasicMatrix<T> assemble_memory(const std::vector<std::vector<T>>& pooled,
                               std::span<const T> sentinel) {
  BasicMatrix<T> c(pooled.size() + 1, sentinel.size());
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    if (pooled[i].size() != sentinel.size()) {
      throw DimensionError("memory row " + std::to_string(i) + " has dimension " +
                           std::to_string(pooled[i].size()) + ", sentinel has " +
                           std::to_string(sentinel.size()));
    }
    std::copy(pooled[i].begin(), pooled[i].end(), c.row(i).begin());
  }
  std::copy(sentinel.begin(), sentinel.end(), c.row(pooled.size()).begin());
  return c;
}

template <typename T>
struct BasicFuseParams {
  BasicMatrix<T> wq;  // d x d_k
  BasicMatrix<T> wk;  // d_c x d_k
  BasicMatrix<T> wv;  // d_c x d

  template <typename U>
  static BasicFuseParams cast(const BasicFuseParams<U>& p) {
    return {BasicMatrix<T>::cast(p.wq), BasicMatrix<T>::cast(p.wk),
            BasicMatrix<T>::cast(p.wv)};
  }
};
using FuseParams = BasicFuseParams<double>;

struct FuseOptions {
  // Divide the logits by sqrt(d_k). Off by default.
  bool scaled = false;
};

template <typename T>
struct FuseTrace {
  BasicMatrix<T> q, k, v;
  BasicMatrix<T> attention;  // n x (m+1), rows sum to 1
  BasicMatrix<T> output;     // n x d
};

template <typename T>
FuseTrace<T> c2t_fuse_trace(const BasicMatrix<T>& h, const BasicMatrix<T>& c,
                            const BasicFuseParams<T>& p, const FuseOptions& opts = {}) {
  const std::size_t d = h.cols();
  const std::size_t dc = c.cols();
  if (p.wq.rows() != d || p.wk.rows() != dc || p.wv.rows() != dc || p.wv.cols() != d ||
      p.wq.cols() != p.wk.cols() || c.rows() == 0 || h.rows() == 0) {
    throw DimensionError("c2t_fuse: inconsistent shapes (H " + std::to_string(h.rows()) + "x" +
                         std::to_string(d) + ", C " + std::to_string(c.rows()) + "x" +
                         std::to_string(dc) + ")");
  }
  FuseTrace<T> t;
  t.q = matmul(h, p.wq);
  t.k = matmul(c, p.wk);
  t.v = matmul(c, p.wv);
  BasicMatrix<T> logits = matmul(t.q, transpose(t.k));
  if (opts.scaled) {
    const T s = T(1) / std::sqrt(static_cast<T>(p.wq.cols()));
    for (T& x : logits.data()) x *= s;
  }
  for (T x : logits.data()) {
    if (!std::isfinite(static_cast<double>(x))) {
      throw NumericError("c2t_fuse: non-finite attention logit");
    }
  }
  t.attention = softmax_rows(logits);
  t.output = matmul(t.attention, t.v);
  for (std::size_t i = 0; i < t.output.size(); ++i) {
    t.output.data()[i] += h.data()[i];
    if (!std::isfinite(static_cast<double>(t.output.data()[i]))) {
      throw NumericError("c2t_fuse: non-finite output");
    }
  }
  return t;
}

template <typename T>
BasicMatrix<T> c2t_fuse(const BasicMatrix<T>& h, const BasicMatrix<T>& c,
                        const BasicFuseParams<T>& p, const FuseOptions& opts = {}) {
  return c2t_fuse_trace(h, c, p, opts).output;
}

struct PoolGrads {
  Matrix elements;
  Matrix projection;
  std::vector<double> bias;
  std::vector<double> scorer;
};

/// Gradients of <d_output, attention_pool(elements, p)>.
PoolGrads attention_pool_backward(const Matrix& elements, const PoolParams& p,
                                  std::span<const double> d_output);

struct FuseGrads {
  Matrix h;
  Matrix c;
  Matrix wq;
  Matrix wk;
  Matrix wv;
};

/// Gradients of <d_output, c2t_fuse(h, c, p)>.
FuseGrads c2t_fuse_backward(const Matrix& h, const Matrix& c, const FuseParams& p,
                            const Matrix& d_output, const FuseOptions& opts = {});

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
  std::string worst;  // "<tensor>[index]"
};

inline constexpr double kDefaultFdStep = 1e-5;

/// Central differences of sum(outputs), evaluated in long double, against the
/// analytic gradients. Error per entry: |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult grad_check_pool(const Matrix& elements, const PoolParams& p,
                                double step = kDefaultFdStep);
GradCheckResult grad_check_fuse(const Matrix& h, const Matrix& c, const FuseParams& p,
                                const FuseOptions& opts = {}, double step = kDefaultFdStep);

struct PoolInstance {
  Matrix elements;
  PoolParams params;
};

struct FuseInstance {
  Matrix h;
  Matrix c;
  FuseParams params;
};

PoolInstance random_pool_instance(std::mt19937_64& rng, std::size_t m, std::size_t de,
                                  std::size_t da, double scale = 1.0);
FuseInstance random_fuse_instance(std::mt19937_64& rng, std::size_t n, std::size_t d,
                                  std::size_t m, std::size_t dc, std::size_t dk,
                                  double scale = 0.5);

/// "rows cols" followed by rows*cols decimal values in row-major order.
Matrix read_matrix(std::istream& in);
void write_matrix(std::ostream& out, const Matrix& m);

}  // namespace ckprobe
