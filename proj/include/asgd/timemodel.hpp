#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/exponential.hpp>
#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/tools/roots.hpp>

#include "asgd/rng.hpp"

namespace asgd {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class DistKind { exponential, uniform, half_normal, lognormal, gamma, deterministic };

inline const char* dist_kind_name(DistKind k) {
  switch (k) {
    case DistKind::exponential: return "exponential";
    case DistKind::uniform: return "uniform";
    case DistKind::half_normal: return "half_normal";
    case DistKind::lognormal: return "lognormal";
    case DistKind::gamma: return "gamma";
    case DistKind::deterministic: return "deterministic";
  }
  return "?";
}

// A base law plus a nonnegative additive shift. ShiftedExponential is the
// exponential kind with shift > 0.
//   exponential:   p1 = scale
//   uniform:       p1 = lo, p2 = hi
//   half_normal:   p1 = scale of the underlying normal
//   lognormal:     p1 = mu, p2 = sigma of the underlying normal
//   gamma:         p1 = shape, p2 = scale
//   deterministic: p1 = value
struct Distribution {
  DistKind kind = DistKind::deterministic;
  double p1 = 1.0;
  double p2 = 0.0;
  double shift = 0.0;

  static Distribution exponential(double scale) { return {DistKind::exponential, scale, 0, 0}; }
  static Distribution shifted_exponential(double shift, double scale) {
    return {DistKind::exponential, scale, 0, shift};
  }
  static Distribution uniform(double lo, double hi) { return {DistKind::uniform, lo, hi, 0}; }
  static Distribution half_normal(double scale) { return {DistKind::half_normal, scale, 0, 0}; }
  static Distribution lognormal(double mu, double sigma) {
    return {DistKind::lognormal, mu, sigma, 0};
  }
  static Distribution gamma(double shape, double scale) {
    return {DistKind::gamma, shape, scale, 0};
  }
  static Distribution deterministic(double v) { return {DistKind::deterministic, v, 0, 0}; }

  Distribution shifted(double s) const {
    Distribution d = *this;
    d.shift += s;
    return d;
  }

  void validate() const {
    auto bad = [](const std::string& m) { throw std::invalid_argument("distribution: " + m); };
    if (!(shift >= 0.0)) bad("shift must be >= 0");
    switch (kind) {
      case DistKind::exponential:
        if (!(p1 > 0.0)) bad("exponential scale must be > 0");
        break;
      case DistKind::uniform:
        if (!(p1 >= 0.0) || !(p2 > p1)) bad("uniform needs 0 <= lo < hi");
        break;
      case DistKind::half_normal:
        if (!(p1 > 0.0)) bad("half_normal scale must be > 0");
        break;
      case DistKind::lognormal:
        if (!std::isfinite(p1) || !(p2 > 0.0)) bad("lognormal needs finite mu and sigma > 0");
        break;
      case DistKind::gamma:
        if (!(p1 > 0.0) || !(p2 > 0.0)) bad("gamma shape and scale must be > 0");
        break;
      case DistKind::deterministic:
        if (!(p1 + shift > 0.0) || p1 < 0.0) bad("deterministic value must be > 0");
        break;
    }
  }

  double mean() const {
    switch (kind) {
      case DistKind::exponential: return shift + p1;
      case DistKind::uniform: return shift + 0.5 * (p1 + p2);
      case DistKind::half_normal: return shift + p1 * std::sqrt(2.0 / M_PI);
      case DistKind::lognormal: return shift + std::exp(p1 + 0.5 * p2 * p2);
      case DistKind::gamma: return shift + p1 * p2;
      case DistKind::deterministic: return shift + p1;
    }
    return 0.0;
  }

  double variance() const {
    switch (kind) {
      case DistKind::exponential: return p1 * p1;
      case DistKind::uniform: return (p2 - p1) * (p2 - p1) / 12.0;
      case DistKind::half_normal: return p1 * p1 * (1.0 - 2.0 / M_PI);
      case DistKind::lognormal: return (std::exp(p2 * p2) - 1.0) * std::exp(2.0 * p1 + p2 * p2);
      case DistKind::gamma: return p1 * p2 * p2;
      case DistKind::deterministic: return 0.0;
    }
    return 0.0;
  }

  // Lognormal has no moment generating function, so no Orlicz bound exists.
  bool sub_exponential() const { return kind != DistKind::lognormal; }

  template <class Urbg>
  double sample(Urbg& g) const {
    switch (kind) {
      case DistKind::exponential:
        return shift + std::exponential_distribution<double>(1.0 / p1)(g);
      case DistKind::uniform:
        return shift + std::uniform_real_distribution<double>(p1, p2)(g);
      case DistKind::half_normal:
        return shift + std::abs(std::normal_distribution<double>(0.0, p1)(g));
      case DistKind::lognormal:
        return shift + std::lognormal_distribution<double>(p1, p2)(g);
      case DistKind::gamma:
        return shift + std::gamma_distribution<double>(p1, p2)(g);
      case DistKind::deterministic:
        return shift + p1;
    }
    return 0.0;
  }

  double orlicz_upper() const;
};

namespace detail {

// E exp(|X - mu| / c) evaluated in quantile space, so every kind reduces to a
// one-dimensional integral over (0, 1). Divergence is reported as +inf.
template <class Quantile>
double centered_exp_moment(Quantile q, double mu, double c) {
  boost::math::quadrature::tanh_sinh<double> integrator;
  auto f = [&](double p, double pc) {
    const double x = q(p, pc);
    return std::exp(std::abs(x - mu) / c);
  };
  try {
    const double v = integrator.integrate(f, 0.0, 1.0);
    return std::isfinite(v) ? v : kInf;
  } catch (const std::exception&) {
    return kInf;
  }
}

template <class Quantile>
double orlicz_root(Quantile q, double mu, double sd) {
  auto h = [&](double c) { return centered_exp_moment(q, mu, c) - 2.0; };
  double hi = 2.0 * sd;
  while (h(hi) > 0.0) hi *= 2.0;
  double lo = hi;
  while (h(lo) <= 0.0) lo *= 0.5;
  hi = 2.0 * lo;
  std::uintmax_t iters = 200;
  auto r = boost::math::tools::toms748_solve(
      h, lo, hi, boost::math::tools::eps_tolerance<double>(40), iters);
  // Upper end of the bracket, nudged up, so the value stays an upper bound.
  return r.second * (1.0 + 1e-9);
}

}  // namespace detail

// Numerical value of the centered psi_1 norm, rounded upward. The shift does
// not enter because the norm is of X - mean.
inline double Distribution::orlicz_upper() const {
  namespace bm = boost::math;
  const double sd = std::sqrt(variance());
  switch (kind) {
    case DistKind::deterministic:
      return 0.0;
    case DistKind::lognormal:
      return kInf;
    case DistKind::uniform: {
      // |X - mu| is uniform on [0, h]: E e^{|X-mu|/c} = (e^u - 1)/u with u = h/c.
      const double h = 0.5 * (p2 - p1);
      auto g = [](double u) { return std::expm1(u) / u - 2.0; };
      std::uintmax_t iters = 200;
      auto r = bm::tools::toms748_solve(g, 0.5, 2.0, bm::tools::eps_tolerance<double>(50), iters);
      return h / r.first * (1.0 + 1e-9);
    }
    case DistKind::exponential: {
      bm::exponential_distribution<double> d(1.0 / p1);
      auto q = [&](double p, double pc) {
        return p < 0.5 ? bm::quantile(d, p) : bm::quantile(bm::complement(d, pc));
      };
      return detail::orlicz_root(q, p1, sd);
    }
    case DistKind::half_normal: {
      bm::normal_distribution<double> d(0.0, p1);
      auto q = [&](double p, double pc) {
        return p < 0.5 ? bm::quantile(d, 0.5 + 0.5 * p)
                       : bm::quantile(bm::complement(d, 0.5 * pc));
      };
      return detail::orlicz_root(q, p1 * std::sqrt(2.0 / M_PI), sd);
    }
    case DistKind::gamma: {
      bm::gamma_distribution<double> d(p1, p2);
      auto q = [&](double p, double pc) {
        return p < 0.5 ? bm::quantile(d, p) : bm::quantile(bm::complement(d, pc));
      };
      return detail::orlicz_root(q, p1 * p2, sd);
    }
  }
  return kInf;
}

inline std::pair<double, double> mean_and_orlicz(const Distribution& d) {
  return {d.mean(), d.orlicz_upper()};
}

// Nonnegative piecewise-constant function of time. values[j] holds on
// [breaks[j], breaks[j+1]); the last value extends to infinity.
class PiecewisePower {
 public:
  PiecewisePower() : breaks_{0.0}, values_{0.0} {}
  PiecewisePower(std::vector<double> breaks, std::vector<double> values)
      : breaks_(std::move(breaks)), values_(std::move(values)) {
    if (breaks_.empty() || breaks_.size() != values_.size())
      throw std::invalid_argument("power: breaks and values must have equal nonzero length");
    if (breaks_.front() != 0.0) throw std::invalid_argument("power: first break must be 0");
    for (std::size_t j = 0; j < values_.size(); ++j) {
      if (!(values_[j] >= 0.0) || !std::isfinite(values_[j]))
        throw std::invalid_argument("power: values must be finite and nonnegative");
      if (j > 0 && !(breaks_[j] > breaks_[j - 1]))
        throw std::invalid_argument("power: breaks must be strictly increasing");
    }
  }
  static PiecewisePower constant(double v) { return PiecewisePower({0.0}, {v}); }

  const std::vector<double>& breaks() const { return breaks_; }
  const std::vector<double>& values() const { return values_; }

  double value_at(double t) const { return values_[segment(t)]; }

  double integral(double a, double b) const {
    if (b < a || a < 0.0) throw std::invalid_argument("power: bad interval");
    if (b == a) return 0.0;
    double acc = 0.0;
    for (std::size_t j = segment(a); j < values_.size(); ++j) {
      const double lo = std::max(a, breaks_[j]);
      const double hi = j + 1 < breaks_.size() ? std::min(b, breaks_[j + 1]) : b;
      if (hi > lo) acc += values_[j] * (hi - lo);
      if (j + 1 >= breaks_.size() || breaks_[j + 1] >= b) break;
    }
    return acc;
  }

  // Smallest T >= a with integral(a, T) >= amount; +inf if never.
  double time_to_accumulate(double a, double amount) const {
    if (amount <= 0.0) return a;
    double need = amount;
    double t = a;
    for (std::size_t j = segment(a); j < values_.size(); ++j) {
      const double end = j + 1 < breaks_.size() ? breaks_[j + 1] : kInf;
      const double v = values_[j];
      if (v > 0.0) {
        const double dt = need / v;
        if (t + dt <= end) return t + dt;
        need -= v * (end - t);
      }
      t = end;
    }
    return kInf;
  }

 private:
  std::size_t segment(double t) const {
    auto it = std::upper_bound(breaks_.begin(), breaks_.end(), t);
    return it == breaks_.begin() ? 0 : static_cast<std::size_t>(it - breaks_.begin()) - 1;
  }

  std::vector<double> breaks_;
  std::vector<double> values_;
};

// Floor with a relative guard, so 3 * (1/3) counts as one full gradient.
inline long floor_count(double v) {
  return static_cast<long>(std::floor(v + 1e-9 * std::max(1.0, std::abs(v))));
}

inline long grads_completed(const PiecewisePower& p, double t0, double t1) {
  if (t1 < t0 || t0 < 0.0) throw std::invalid_argument("grads_completed: need 0 <= T0 <= T1");
  return floor_count(p.integral(t0, t1));
}

enum class ModelKind { fixed, universal, stochastic };

struct ComputeModel {
  ModelKind kind = ModelKind::fixed;
  std::vector<double> tau;
  std::vector<PiecewisePower> power;
  std::vector<Distribution> dist;

  static ComputeModel fixed(std::vector<double> taus) {
    ComputeModel m;
    m.kind = ModelKind::fixed;
    m.tau = std::move(taus);
    m.validate();
    return m;
  }
  static ComputeModel universal(std::vector<PiecewisePower> p) {
    ComputeModel m;
    m.kind = ModelKind::universal;
    m.power = std::move(p);
    m.validate();
    return m;
  }
  static ComputeModel stochastic(std::vector<Distribution> d) {
    ComputeModel m;
    m.kind = ModelKind::stochastic;
    m.dist = std::move(d);
    m.validate();
    return m;
  }

  int n() const {
    switch (kind) {
      case ModelKind::fixed: return static_cast<int>(tau.size());
      case ModelKind::universal: return static_cast<int>(power.size());
      case ModelKind::stochastic: return static_cast<int>(dist.size());
    }
    return 0;
  }

  void validate() const {
    if (n() < 1) throw std::invalid_argument("compute model: need at least one worker");
    for (double t : tau)
      if (!(t > 0.0) || !std::isfinite(t)) throw std::invalid_argument("compute model: tau must be > 0");
    for (const auto& d : dist) {
      d.validate();
      if (!(d.mean() > 0.0)) throw std::invalid_argument("compute model: mean must be > 0");
    }
  }

  // Per-worker mean seconds per gradient (1/p for constant powers).
  std::vector<double> means() const {
    std::vector<double> out;
    switch (kind) {
      case ModelKind::fixed: return tau;
      case ModelKind::stochastic:
        for (const auto& d : dist) out.push_back(d.mean());
        return out;
      case ModelKind::universal:
        for (const auto& p : power) {
          const double v = p.values().back();
          out.push_back(v > 0.0 ? 1.0 / v : kInf);
        }
        return out;
    }
    return out;
  }
};

inline const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::fixed: return "fixed";
    case ModelKind::universal: return "universal";
    case ModelKind::stochastic: return "stochastic";
  }
  return "?";
}

inline double sample_duration(const ComputeModel& m, int worker, std::uint64_t counter,
                              std::uint64_t seed) {
  if (worker < 0 || worker >= m.n()) throw std::out_of_range("sample_duration: bad worker");
  switch (m.kind) {
    case ModelKind::fixed:
      return m.tau[worker];
    case ModelKind::stochastic: {
      CounterRng g(seed, Stream::duration, static_cast<std::uint64_t>(worker), counter);
      return m.dist[worker].sample(g);
    }
    case ModelKind::universal:
      break;
  }
  throw std::domain_error("sample_duration: universal model has no pointwise duration");
}

// Named experiment presets. Workers are 1-based in the formulas.
inline ComputeModel experiment_times(const std::string& preset, int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("experiment_times: n must be >= 1");
  constexpr double c = 29.0;
  if (preset == "sqrt_shifted_exp" || preset == "linear_shifted_exp") {
    std::vector<Distribution> d;
    for (int i = 1; i <= n; ++i) {
      const double s = preset == "sqrt_shifted_exp" ? c * std::sqrt(double(i)) : c * i;
      d.push_back(Distribution::shifted_exponential(s, s));
    }
    return ComputeModel::stochastic(std::move(d));
  }
  if (preset == "fixed_linear_jitter") {
    // eta_i ~ N(0, i) with i the variance.
    std::vector<double> tau;
    for (int i = 1; i <= n; ++i) {
      CounterRng g(seed, Stream::preset, static_cast<std::uint64_t>(i), 0);
      const double eta = std::normal_distribution<double>(0.0, std::sqrt(double(i)))(g);
      tau.push_back(i + std::abs(eta));
    }
    return ComputeModel::fixed(std::move(tau));
  }
  if (preset == "five_dist_groups") {
    std::vector<Distribution> d;
    for (int i = 0; i < n; ++i) {
      const double m = c * (5 * (i / 5) + 1);
      Distribution base;
      switch (i % 5) {
        case 0: base = Distribution::exponential(m); break;
        case 1: base = Distribution::uniform(m / 2, 3 * m / 2); break;
        case 2: base = Distribution::half_normal(m * std::sqrt(M_PI / 2)); break;
        case 3: base = Distribution::lognormal(std::log(m) / 2, std::sqrt(std::log(m))); break;
        default: base = Distribution::gamma(m * m, 1.0 / m); break;
      }
      d.push_back(base.shifted(m));
    }
    return ComputeModel::stochastic(std::move(d));
  }
  throw std::invalid_argument("experiment_times: unknown preset '" + preset + "'");
}

}  // namespace asgd
