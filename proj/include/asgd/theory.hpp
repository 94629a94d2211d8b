#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "asgd/timemodel.hpp"

namespace asgd::theory {

inline void require_ascending(const std::vector<double>& taus, const char* who) {
  if (taus.empty()) throw std::invalid_argument(std::string(who) + ": empty taus");
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (!(taus[i] > 0.0)) throw std::invalid_argument(std::string(who) + ": taus must be > 0");
    if (i > 0 && taus[i] < taus[i - 1])
      throw std::invalid_argument(std::string(who) + ": taus must be ascending");
  }
}

// g(m) = (m^{-1} sum_{i<=m} 1/tau_i)^{-1} * factor(m), minimized over m in [n].
// Returns {min value, smallest argmin (1-based)}.
template <class Factor>
std::pair<double, long> min_over_prefix(const std::vector<double>& taus, Factor factor) {
  double inv = 0.0;
  double best = kInf;
  long arg = 1;
  for (std::size_t i = 0; i < taus.size(); ++i) {
    inv += 1.0 / taus[i];
    const double m = static_cast<double>(i + 1);
    const double v = (m / inv) * factor(m);
    if (v < best) {
      best = v;
      arg = static_cast<long>(i + 1);
    }
  }
  return {best, arg};
}

// Upper bound on the time of any R consecutive Ringmaster updates.
inline double t_of_R(const std::vector<double>& taus, long R) {
  require_ascending(taus, "t_of_R");
  if (R < 1) throw std::invalid_argument("t_of_R: R must be >= 1");
  const double r = static_cast<double>(R);
  return 2.0 * min_over_prefix(taus, [r](double m) { return 1.0 + r / m; }).first;
}

inline long ceil_ratio_at_least_one(double sigma2, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be > 0");
  if (sigma2 < 0.0) throw std::invalid_argument("sigma2 must be >= 0");
  return std::max(1L, static_cast<long>(std::ceil(sigma2 / eps)));
}

inline long optimal_R(double sigma2, double eps) { return ceil_ratio_at_least_one(sigma2, eps); }
inline long rennala_B(double sigma2, double eps) { return ceil_ratio_at_least_one(sigma2, eps); }

inline long ringmaster_K(long R, double L, double Delta, double sigma2, double eps) {
  const double k = 8.0 * R * L * Delta / eps + 16.0 * sigma2 * L * Delta / (eps * eps);
  return static_cast<long>(std::ceil(k));
}

inline long ringleader_K(long n, double L, double Delta, double sigma2, double eps, double B) {
  const double k = 32.0 * n * L * Delta / eps + 40.0 * L * Delta * sigma2 / (B * eps * eps);
  return static_cast<long>(std::ceil(k));
}

inline double ringmaster_stepsize(long R, double L, double sigma2, double eps) {
  const double a = 1.0 / (2.0 * R * L);
  return sigma2 > 0.0 ? std::min(a, eps / (4.0 * L * sigma2)) : a;
}

inline double ringleader_stepsize(long n, double L, double sigma2, double eps, double B) {
  const double a = 1.0 / (8.0 * n * L);
  return sigma2 > 0.0 ? std::min(a, eps * B / (10.0 * L * sigma2)) : a;
}

// Smallest T with sum_i floor(1/4 * int_{T0}^T p_i) >= R; +inf if unreachable.
inline double universal_T(const std::vector<PiecewisePower>& powers, long R, double T0) {
  if (R < 1) throw std::invalid_argument("universal_T: R must be >= 1");
  // Worker i's count reaches j exactly when its integral reaches 4j, so T is
  // the R-th smallest of those crossing times.
  std::vector<double> crossings;
  for (const auto& p : powers)
    for (long j = 1; j <= R; ++j) {
      const double t = p.time_to_accumulate(T0, 4.0 * static_cast<double>(j));
      if (!std::isfinite(t)) break;
      crossings.push_back(t);
    }
  if (crossings.size() < static_cast<std::size_t>(R)) return kInf;
  std::nth_element(crossings.begin(), crossings.begin() + (R - 1), crossings.end());
  return crossings[R - 1];
}

inline std::vector<double> universal_T_sequence(const std::vector<PiecewisePower>& powers,
                                                long R, long count) {
  std::vector<double> out;
  double t = 0.0;
  for (long k = 0; k < count; ++k) {
    t = std::isfinite(t) ? universal_T(powers, R, t) : kInf;
    out.push_back(t);
  }
  return out;
}

// tau_n / (2 tau_avg), with tau_avg the arithmetic mean.
inline double harmonic_floor(const std::vector<double>& taus) {
  if (taus.empty()) throw std::invalid_argument("harmonic_floor: empty taus");
  double sum = 0.0;
  for (double t : taus) sum += t;
  const double tmax = *std::max_element(taus.begin(), taus.end());
  return tmax / (2.0 * sum / static_cast<double>(taus.size()));
}

inline double sandwich_factor(double eta, long B) {
  if (B < 1) throw std::invalid_argument("sandwich_factor: B must be >= 1");
  return 1.0 + 4.0 * eta * std::log(static_cast<double>(B));
}

struct ClosedFormT {
  double T_R;
  double T_A;
};

// Order quantities with all constants set to 1; only ratios are meaningful.
inline ClosedFormT closed_form_T(const std::vector<double>& taus, double L, double Delta,
                                 double sigma2, double eps) {
  require_ascending(taus, "closed_form_T");
  auto factor = [&](double m) { return L * Delta / eps + sigma2 * L * Delta / (m * eps * eps); };
  const double tr = min_over_prefix(taus, factor).first;
  double inv = 0.0;
  for (double t : taus) inv += 1.0 / t;
  const double n = static_cast<double>(taus.size());
  return {tr, (n / inv) * factor(n)};
}

// Number of workers Naive Optimal ASGD keeps; ties go to the smaller m.
inline long select_m_star(const std::vector<double>& taus, double sigma2, double eps) {
  require_ascending(taus, "select_m_star");
  if (!(eps > 0.0)) throw std::invalid_argument("select_m_star: eps must be > 0");
  const double ratio = sigma2 / eps;
  return min_over_prefix(taus, [ratio](double m) { return 1.0 + ratio / m; }).second;
}

}  // namespace asgd::theory
