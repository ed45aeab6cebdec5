#include "ckprobe/fusion.hpp"

#include <charconv>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>

#include "ckprobe/io.hpp"

namespace ckprobe {

PoolGrads attention_pool_backward(const Matrix& elements, const PoolParams& p,
                                  std::span<const double> d_output) {
  const auto t = attention_pool_trace(elements, p);
  const std::size_t m = elements.rows();
  const std::size_t de = elements.cols();
  const std::size_t da = p.projection.cols();
  if (d_output.size() != de) throw DimensionError("attention_pool_backward: bad d_output");

  std::vector<double> d_alpha(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t c = 0; c < de; ++c) d_alpha[j] += d_output[c] * elements(j, c);
  }
  double mean = 0.0;
  for (std::size_t j = 0; j < m; ++j) mean += t.weights[j] * d_alpha[j];

  PoolGrads g{Matrix(m, de), Matrix(de, da), std::vector<double>(da, 0.0),
              std::vector<double>(da, 0.0)};
  Matrix du(m, da);
  for (std::size_t j = 0; j < m; ++j) {
    const double ds = t.weights[j] * (d_alpha[j] - mean);
    for (std::size_t a = 0; a < da; ++a) {
      const double h = t.hidden(j, a);
      g.scorer[a] += ds * h;
      du(j, a) = ds * p.scorer[a] * (1.0 - h * h);
      g.bias[a] += du(j, a);
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t c = 0; c < de; ++c) {
      double acc = t.weights[j] * d_output[c];
      for (std::size_t a = 0; a < da; ++a) {
        g.projection(c, a) += elements(j, c) * du(j, a);
        acc += p.projection(c, a) * du(j, a);
      }
      g.elements(j, c) = acc;
    }
  }
  return g;
}

FuseGrads c2t_fuse_backward(const Matrix& h, const Matrix& c, const FuseParams& p,
                            const Matrix& d_output, const FuseOptions& opts) {
  const auto t = c2t_fuse_trace(h, c, p, opts);
  if (d_output.rows() != h.rows() || d_output.cols() != h.cols()) {
    throw DimensionError("c2t_fuse_backward: bad d_output");
  }
  const Matrix& a = t.attention;
  const Matrix d_a = matmul(d_output, transpose(t.v));
  const Matrix d_v = matmul(transpose(a), d_output);

  Matrix d_s(a.rows(), a.cols());
  const double scale =
      opts.scaled ? 1.0 / std::sqrt(static_cast<double>(p.wq.cols())) : 1.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) dot += a(i, j) * d_a(i, j);
    for (std::size_t j = 0; j < a.cols(); ++j) {
      d_s(i, j) = a(i, j) * (d_a(i, j) - dot) * scale;
    }
  }
  const Matrix d_q = matmul(d_s, t.k);
  const Matrix d_k = matmul(transpose(d_s), t.q);

  FuseGrads g;
  g.h = matmul(d_q, transpose(p.wq));
  for (std::size_t i = 0; i < g.h.size(); ++i) g.h.data()[i] += d_output.data()[i];
  g.wq = matmul(transpose(h), d_q);
  g.wk = matmul(transpose(c), d_k);
  g.wv = matmul(transpose(c), d_v);
  g.c = matmul(d_k, transpose(p.wk));
  const Matrix dc_v = matmul(d_v, transpose(p.wv));
  for (std::size_t i = 0; i < g.c.size(); ++i) g.c.data()[i] += dc_v.data()[i];
  return g;
}

namespace {

using Real = long double;

template <typename Container>
Real total(const Container& xs) {
  Real s = 0;
  for (Real x : xs) s += x;
  return s;
}

class Checker {
 public:
  explicit Checker(double step) : step_(step) {}

  // Perturbs every entry of `values` in place and compares the central
  // difference of `loss` against `analytic`.
  void check(const std::string& name, std::vector<Real>& values,
             const std::vector<double>& analytic, const std::function<Real()>& loss) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const Real saved = values[i];
      values[i] = saved + step_;
      const Real plus = loss();
      values[i] = saved - step_;
      const Real minus = loss();
      values[i] = saved;
      const double numeric = static_cast<double>((plus - minus) / (2 * step_));
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double err = std::abs(a - numeric) / denom;
      if (result_.entries++ == 0 || err > result_.max_rel_error) {
        result_.max_rel_error = err;
        result_.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }

  GradCheckResult result() const { return result_; }

 private:
  Real step_;
  GradCheckResult result_;
};

}  // namespace

GradCheckResult grad_check_pool(const Matrix& elements, const PoolParams& p, double step) {
  const std::vector<double> ones(elements.cols(), 1.0);
  const PoolGrads g = attention_pool_backward(elements, p, ones);

  auto e = BasicMatrix<Real>::cast(elements);
  auto lp = BasicPoolParams<Real>::cast(p);
  auto loss = [&] { return total(attention_pool(e, lp)); };

  Checker checker(step);
  checker.check("elements", e.data(), g.elements.data(), loss);
  checker.check("projection", lp.projection.data(), g.projection.data(), loss);
  checker.check("bias", lp.bias, g.bias, loss);
  checker.check("scorer", lp.scorer, g.scorer, loss);
  return checker.result();
}

GradCheckResult grad_check_fuse(const Matrix& h, const Matrix& c, const FuseParams& p,
                                const FuseOptions& opts, double step) {
  const Matrix ones(h.rows(), h.cols(), 1.0);
  const FuseGrads g = c2t_fuse_backward(h, c, p, ones, opts);

  auto lh = BasicMatrix<Real>::cast(h);
  auto lc = BasicMatrix<Real>::cast(c);
  auto lp = BasicFuseParams<Real>::cast(p);
  auto loss = [&] { return total(c2t_fuse(lh, lc, lp, opts).data()); };

  Checker checker(step);
  checker.check("H", lh.data(), g.h.data(), loss);
  checker.check("C", lc.data(), g.c.data(), loss);
  checker.check("Wq", lp.wq.data(), g.wq.data(), loss);
  checker.check("Wk", lp.wk.data(), g.wk.data(), loss);
  checker.check("Wv", lp.wv.data(), g.wv.data(), loss);
  return checker.result();
}

namespace {

Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double scale) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix m(rows, cols);
  for (double& x : m.data()) x = dist(rng);
  return m;
}

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double scale) {
  return random_matrix(rng, 1, n, scale).data();
}

}  // namespace

PoolInstance random_pool_instance(std::mt19937_64& rng, std::size_t m, std::size_t de,
                                  std::size_t da, double scale) {
  PoolInstance inst;
  inst.elements = random_matrix(rng, m, de, scale);
  inst.params.projection = random_matrix(rng, de, da, scale);
  inst.params.bias = random_vector(rng, da, scale);
  inst.params.scorer = random_vector(rng, da, scale);
  return inst;
}

FuseInstance random_fuse_instance(std::mt19937_64& rng, std::size_t n, std::size_t d,
                                  std::size_t m, std::size_t dc, std::size_t dk,
                                  double scale) {
  FuseInstance inst;
  inst.h = random_matrix(rng, n, d, scale);
  inst.c = random_matrix(rng, m + 1, dc, scale);
  inst.params.wq = random_matrix(rng, d, dk, scale);
  inst.params.wk = random_matrix(rng, dc, dk, scale);
  inst.params.wv = random_matrix(rng, dc, d, scale);
  return inst;
}

Matrix read_matrix(std::istream& in) {
  long long rows = -1;
  long long cols = -1;
  if (!(in >> rows >> cols) || rows < 0 || cols < 0) {
    throw ParseError("matrix header", "expected non-negative \"rows cols\"");
  }
  Matrix m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
  std::string token;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!(in >> token)) {
      throw ParseError("matrix entry " + std::to_string(i),
                       "expected " + std::to_string(m.size()) + " values");
    }
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc() || ptr != token.data() + token.size()) {
      throw ParseError("matrix entry " + std::to_string(i), "not a number: " + token);
    }
    m.data()[i] = v;
  }
  return m;
}

void write_matrix(std::ostream& out, const Matrix& m) {
  out << m.rows() << ' ' << m.cols() << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out << ' ';
      out << format_double(m(r, c));
    }
    out << '\n';
  }
}

}  // namespace ckprobe
