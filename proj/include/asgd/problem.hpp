#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <boost/random/normal_distribution.hpp>

#include "asgd/rng.hpp"

namespace asgd {

using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm_sq(const Vec& a) { return dot(a, a); }

// What the engine needs from an objective. Worker-indexed so heterogeneous
// problems can route each worker to its own local function.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::size_t dim() const = 0;
  virtual void sample_gradient(int worker, const Vec& x, std::uint64_t counter,
                               std::uint64_t seed, Vec& out) const = 0;
  virtual double grad_norm_sq(const Vec& x) const = 0;
  virtual double suboptimality(const Vec& x) const = 0;
  // Per-gradient noise variance bound, i.e. E||g - grad f||^2.
  virtual double noise_variance() const = 0;
};

// Allocation-only runs carry no model.
class NullObjective final : public Objective {
 public:
  std::size_t dim() const override { return 0; }
  void sample_gradient(int, const Vec&, std::uint64_t, std::uint64_t, Vec& out) const override {
    out.clear();
  }
  double grad_norm_sq(const Vec&) const override { return 0.0; }
  double suboptimality(const Vec&) const override { return 0.0; }
  double noise_variance() const override { return 0.0; }
};

// y = A x for A = (1/4) tridiag(-1, 2, -1).
inline void apply_A(const Vec& x, Vec& y) {
  const std::size_t d = x.size();
  y.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    double v = 2.0 * x[i];
    if (i > 0) v -= x[i - 1];
    if (i + 1 < d) v -= x[i + 1];
    y[i] = 0.25 * v;
  }
}

// Thomas algorithm for A x = rhs.
inline Vec solve_A(const Vec& rhs) {
  const std::size_t d = rhs.size();
  Vec c(d, 0.0), r(d, 0.0), x(d, 0.0);
  const double lo = -0.25, diag = 0.5, up = -0.25;
  c[0] = up / diag;
  r[0] = rhs[0] / diag;
  for (std::size_t i = 1; i < d; ++i) {
    const double m = diag - lo * c[i - 1];
    c[i] = up / m;
    r[i] = (rhs[i] - lo * r[i - 1]) / m;
  }
  x[d - 1] = r[d - 1];
  for (std::size_t i = d - 1; i-- > 0;) x[i] = r[i] - c[i] * x[i + 1];
  return x;
}

inline double smoothness_L(std::size_t d) {
  if (d < 1) throw std::invalid_argument("smoothness_L: d must be >= 1");
  return 0.5 * (1.0 + std::cos(M_PI / (static_cast<double>(d) + 1.0)));
}

inline void add_noise(Vec& g, double sigma, int worker, std::uint64_t counter,
                      std::uint64_t seed) {
  if (sigma == 0.0) return;
  CounterRng rng(seed, Stream::noise, static_cast<std::uint64_t>(worker), counter);
  boost::random::normal_distribution<double> nd(0.0, sigma);  // ziggurat
  for (double& v : g) v += nd(rng);
}

// f(x) = 1/2 x^T A x - b^T x with isotropic Gaussian gradient noise.
class QuadraticProblem final : public Objective {
 public:
  QuadraticProblem(std::size_t d, double sigma) : QuadraticProblem(default_b(d), sigma) {}

  QuadraticProblem(Vec b, double sigma) : b_(std::move(b)), sigma_(sigma) {
    if (b_.empty()) throw std::invalid_argument("quadratic: d must be >= 1");
    if (!(sigma_ >= 0.0)) throw std::invalid_argument("quadratic: sigma must be >= 0");
    xstar_ = solve_A(b_);
    fstar_ = -0.5 * dot(b_, xstar_);
  }

  static Vec default_b(std::size_t d) {
    Vec b(d, 0.0);
    if (d > 0) b[0] = -0.25;
    return b;
  }

  std::size_t dim() const override { return b_.size(); }
  double sigma() const { return sigma_; }
  const Vec& b() const { return b_; }
  const Vec& xstar() const { return xstar_; }
  double fstar() const { return fstar_; }
  double L() const { return smoothness_L(dim()); }
  double noise_variance() const override { return sigma_ * sigma_ * static_cast<double>(dim()); }

  void check_dim(const Vec& x) const {
    if (x.size() != dim()) throw std::invalid_argument("quadratic: dimension mismatch");
  }

  void full_gradient(const Vec& x, Vec& out) const {
    check_dim(x);
    apply_A(x, out);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b_[i];
  }
  Vec full_gradient(const Vec& x) const {
    Vec g;
    full_gradient(x, g);
    return g;
  }

  double value(const Vec& x) const {
    check_dim(x);
    Vec ax;
    apply_A(x, ax);
    return 0.5 * dot(x, ax) - dot(b_, x);
  }

  void stochastic_gradient(const Vec& x, int worker, std::uint64_t counter, std::uint64_t seed,
                           Vec& out) const {
    full_gradient(x, out);
    add_noise(out, sigma_, worker, counter, seed);
  }

  void sample_gradient(int worker, const Vec& x, std::uint64_t counter, std::uint64_t seed,
                       Vec& out) const override {
    stochastic_gradient(x, worker, counter, seed, out);
  }

  double grad_norm_sq(const Vec& x) const override {
    Vec g;
    full_gradient(x, g);
    return norm_sq(g);
  }

  // f(x) - f* = 1/2 (x - x*)^T A (x - x*), which avoids cancellation near x*.
  double suboptimality(const Vec& x) const override {
    check_dim(x);
    Vec e(x.size()), ae;
    for (std::size_t i = 0; i < x.size(); ++i) e[i] = x[i] - xstar_[i];
    apply_A(e, ae);
    return 0.5 * dot(e, ae);
  }

 private:
  Vec b_;
  double sigma_;
  Vec xstar_;
  double fstar_;
};

// n local quadratics sharing A, with b_i = b + (1/4) e_{i mod d}; f is their mean.
class HeteroProblem final : public Objective {
 public:
  HeteroProblem(int n, std::size_t d, double sigma)
      : global_(mean_b(n, d), sigma) {
    if (n < 1) throw std::invalid_argument("hetero: n must be >= 1");
    for (int i = 0; i < n; ++i) locals_.emplace_back(local_b(i, n, d), sigma);
  }

  static Vec local_b(int i, int n, std::size_t d) {
    Vec b = QuadraticProblem::default_b(d);
    if (n > 1) b[static_cast<std::size_t>(i) % d] += 0.25;
    return b;
  }
  static Vec mean_b(int n, std::size_t d) {
    Vec b(d, 0.0);
    for (int i = 0; i < n; ++i) {
      Vec bi = local_b(i, n, d);
      for (std::size_t j = 0; j < d; ++j) b[j] += bi[j] / n;
    }
    return b;
  }

  int n() const { return static_cast<int>(locals_.size()); }
  const QuadraticProblem& local(int i) const {
    if (i < 0 || i >= n()) throw std::out_of_range("hetero: worker index out of range");
    return locals_[i];
  }
  const QuadraticProblem& global() const { return global_; }

  std::size_t dim() const override { return global_.dim(); }
  double noise_variance() const override { return global_.noise_variance(); }

  void local_gradient(int i, const Vec& x, std::uint64_t counter, std::uint64_t seed,
                      Vec& out) const {
    local(i).stochastic_gradient(x, i, counter, seed, out);
  }

  void sample_gradient(int worker, const Vec& x, std::uint64_t counter, std::uint64_t seed,
                       Vec& out) const override {
    local_gradient(worker, x, counter, seed, out);
  }
  double grad_norm_sq(const Vec& x) const override { return global_.grad_norm_sq(x); }
  double suboptimality(const Vec& x) const override { return global_.suboptimality(x); }

 private:
  QuadraticProblem global_;
  std::vector<QuadraticProblem> locals_;
};

}  // namespace asgd
