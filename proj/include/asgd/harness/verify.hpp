#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "asgd/alloc_methods.hpp"
#include "asgd/allocation.hpp"
#include "asgd/heterogeneous.hpp"
#include "asgd/homogeneous.hpp"
#include "asgd/problem.hpp"
#include "asgd/rng.hpp"
#include "asgd/theory.hpp"

namespace asgd::harness {

struct Check {
  std::string name;
  long passed = 0;
  long total = 0;
  bool ok() const { return passed == total; }
};

namespace vdetail {

inline CounterRng rng(std::uint64_t seed, std::uint64_t check, std::uint64_t trial) {
  return CounterRng(seed, Stream::sampling, check, trial);
}

inline double unif(CounterRng& g, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(g);
}

inline long unif_int(CounterRng& g, long lo, long hi) {
  return std::uniform_int_distribution<long>(lo, hi)(g);
}

inline std::vector<double> sorted_taus(CounterRng& g, int n) {
  std::vector<double> t(n);
  for (double& v : t) v = unif(g, 1.0, 10.0);
  std::sort(t.begin(), t.end());
  return t;
}

inline ComputeModel random_model(CounterRng& g, int n, int kind) {
  if (kind == 0) return ComputeModel::fixed(sorted_taus(g, n));
  if (kind == 1) {
    std::vector<Distribution> d;
    for (int i = 0; i < n; ++i) {
      const double c = unif(g, 0.5, 5.0);
      d.push_back(Distribution::shifted_exponential(c, c));
    }
    return ComputeModel::stochastic(std::move(d));
  }
  std::vector<PiecewisePower> p;
  for (int i = 0; i < n; ++i) {
    std::vector<double> br{0.0}, val;
    for (int s = 0; s < 6; ++s) {
      br.push_back(br.back() + unif(g, 5.0, 40.0));
      val.push_back(s % 3 == 2 ? 0.0 : unif(g, 0.1, 1.0));
    }
    val.push_back(unif(g, 0.1, 1.0));
    p.emplace_back(std::move(br), std::move(val));
  }
  return ComputeModel::universal(std::move(p));
}

}  // namespace vdetail

inline Check check_ras(long trials, std::uint64_t seed) {
  Check c{"ras"};
  for (long t = 0; t < trials; ++t) {
    auto g = vdetail::rng(seed, 1, t);
    const int n = static_cast<int>(vdetail::unif_int(g, 2, 6));
    const long B = vdetail::unif_int(g, 1, 8);
    std::vector<double> s(n);
    for (double& v : s) v = vdetail::unif(g, 0.1, 10.0);
    const Allocation a = ras(s, B);
    const BruteForceResult bf = brute_force_alloc(s, B);
    ++c.total;
    if (total(a) == B && proxy_loss(a, s) == bf.loss && argmax_cardinality(a, s) == bf.min_cardinality)
      ++c.passed;
  }
  return c;
}

// For the RAS output, a_j s_j <= (a_i + 1) s_i for every pair.
inline Check check_ras_exchange(long trials, std::uint64_t seed) {
  Check c{"ras_exchange"};
  for (long t = 0; t < trials; ++t) {
    auto g = vdetail::rng(seed, 2, t);
    const int n = static_cast<int>(vdetail::unif_int(g, 2, 8));
    const long B = vdetail::unif_int(g, 1, 30);
    std::vector<double> s(n);
    for (double& v : s) v = vdetail::unif(g, 0.1, 10.0);
    const Allocation a = ras(s, B);
    bool ok = true;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (static_cast<double>(a[j]) * s[j] > static_cast<double>(a[i] + 1) * s[i]) ok = false;
    ++c.total;
    c.passed += ok;
  }
  return c;
}

inline Check check_delay_law(long runs, std::uint64_t seed) {
  Check c{"ringmaster_delay_law"};
  const int ns[] = {2, 5, 10};
  for (long r = 0; r < runs; ++r) {
    auto g = vdetail::rng(seed, 3, r);
    const int n = ns[r % 3];
    const ComputeModel m = vdetail::random_model(g, n, static_cast<int>((r / 3) % 2));
    const long R = vdetail::unif_int(g, 1, n);
    const auto v = (r / 6) % 2 ? RingmasterVariant::with_stops : RingmasterVariant::no_stops;
    QuadraticProblem q(5, 0.1);
    RunConfig rc{m, q, static_cast<std::uint64_t>(r), StopRule{.max_k = 200}, {.trace = true}};
    const RunRecord rec = ringmaster(rc, 0.1, R, v);
    bool ok = true;
    for (const auto& e : rec.trace) {
      const long d = e.k_current - e.k_computed_at;
      if (e.action == Action::applied && d >= R) ok = false;
      if (e.action == Action::discarded && d < R) ok = false;
    }
    ++c.total;
    c.passed += ok;
  }
  return c;
}

inline Check check_adaptive_form(long runs, std::uint64_t seed) {
  Check c{"ringmaster_adaptive_form"};
  for (long r = 0; r < runs; ++r) {
    auto g = vdetail::rng(seed, 4, r);
    const int n = static_cast<int>(vdetail::unif_int(g, 2, 8));
    const ComputeModel m = vdetail::random_model(g, n, static_cast<int>(r % 2));
    const long R = vdetail::unif_int(g, 1, n);
    QuadraticProblem q(5, 0.1);
    RunConfig rc{m, q, static_cast<std::uint64_t>(r), StopRule{.max_k = 200}, {.trace = true}};
    ++c.total;
    c.passed += ringmaster_adaptive_form_check(ringmaster(rc, 0.1, R, RingmasterVariant::no_stops).trace, R);
  }
  return c;
}

// Fixed model: any R consecutive updates after update j finish within t(R).
inline Check check_timing(long runs, std::uint64_t seed) {
  Check c{"ringmaster_timing"};
  for (long r = 0; r < runs; ++r) {
    auto g = vdetail::rng(seed, 5, r);
    const int n = static_cast<int>(vdetail::unif_int(g, 2, 10));
    const std::vector<double> taus = vdetail::sorted_taus(g, n);
    const ComputeModel m = ComputeModel::fixed(taus);
    const long R = vdetail::unif_int(g, 1, 2 * n);
    const auto v = r % 2 ? RingmasterVariant::with_stops : RingmasterVariant::no_stops;
    QuadraticProblem q(5, 0.1);
    RunConfig rc{m, q, static_cast<std::uint64_t>(r), StopRule{.max_k = 300}, {.log_updates = true}};
    const RunRecord rec = ringmaster(rc, 0.1, R, v);
    std::vector<double> t{0.0};
    for (const auto& u : rec.updates) t.push_back(u.time);
    const double bound = theory::t_of_R(taus, R) * (1.0 + 1e-12);
    bool ok = true;
    for (std::size_t j = 0; j + R < t.size(); ++j)
      if (t[j + R] - t[j] > bound) ok = false;
    ++c.total;
    c.passed += ok;
  }
  return c;
}

inline Check check_universal_timing(long runs, std::uint64_t seed) {
  Check c{"ringmaster_universal_timing"};
  for (long r = 0; r < runs; ++r) {
    auto g = vdetail::rng(seed, 6, r);
    const int n = static_cast<int>(vdetail::unif_int(g, 2, 6));
    const ComputeModel m = vdetail::random_model(g, n, 2);
    const long R = vdetail::unif_int(g, 1, n);
    QuadraticProblem q(5, 0.1);
    RunConfig rc{m, q, static_cast<std::uint64_t>(r), StopRule{.max_k = 60}, {.log_updates = true}};
    const RunRecord rec = ringmaster(rc, 0.1, R, RingmasterVariant::with_stops);
    std::vector<double> t{0.0};
    for (const auto& u : rec.updates) t.push_back(u.time);
    bool ok = true;
    for (std::size_t j = 0; j + R < t.size(); ++j)
      if (t[j + R] > theory::universal_T(m.power, R, t[j]) * (1.0 + 1e-12)) ok = false;
    ++c.total;
    c.passed += ok;
  }
  return c;
}

inline Check check_ringleader(long runs, std::uint64_t seed) {
  Check c{"ringleader_structure"};
  for (long r = 0; r < runs; ++r) {
    auto g = vdetail::rng(seed, 7, r);
    const int n = static_cast<int>(vdetail::unif_int(g, 2, 8));
    const int kind = static_cast<int>(r % 3);
    const ComputeModel m = vdetail::random_model(g, n, kind);
    HeteroProblem hp(n, 5, 0.1);
    RunConfig rc{m, hp, static_cast<std::uint64_t>(r), StopRule{.max_k = 10L * n}, {.log_updates = true}};
    const RunRecord rec = ringleader(rc, 0.05);
    bool ok = rec.total_discarded() == 0 && rec.updates.size() % n == 0;
    double round_start = 0.0;
    const double floor = kind == 0 ? theory::harmonic_floor(m.tau) : 0.0;
    const double tmax = kind == 0 ? *std::max_element(m.tau.begin(), m.tau.end()) : 0.0;
    for (std::size_t i = 0; ok && i < rec.updates.size(); i += n) {
      std::vector<char> seen(n, 0);
      for (int j = 0; j < n; ++j) {
        const UpdateInfo& u = rec.updates[i + j];
        if (u.worker < 0 || seen[u.worker]) ok = false;
        else seen[u.worker] = 1;
        if (u.max_delay > 2L * n - 2 || !u.pure) ok = false;
        if (kind == 0 && u.batch < floor) ok = false;
      }
      const double end = rec.updates[i + n - 1].time;
      if (kind == 0 && end - round_start > 2.0 * tmax * (1.0 + 1e-12)) ok = false;
      round_start = end;
    }
    ++c.total;
    c.passed += ok;
  }
  return c;
}

// Replays the trace table per iterate: the rule holds at the firing arrival and
// failed at every earlier one.
inline bool malenia_trace_ok(const std::vector<TraceEvent>& trace, int n, double threshold) {
  std::vector<long> b(n, 0);
  long at = 0;
  auto holds = [&] {
    double s = 0.0;
    for (long v : b) {
      if (v == 0) return false;
      s += 1.0 / static_cast<double>(v);
    }
    return static_cast<double>(n) / s >= threshold;
  };
  for (const auto& e : trace) {
    if (e.action != Action::applied && e.action != Action::buffered) continue;
    if (e.k_computed_at != e.k_current) return false;
    if (e.k_current != at) {
      std::fill(b.begin(), b.end(), 0);
      at = e.k_current;
    }
    if (holds()) return false;
    ++b[e.worker];
    if (holds() != (e.action == Action::applied)) return false;
  }
  return true;
}

inline Check check_malenia(long runs, std::uint64_t seed) {
  Check c{"malenia_stopping"};
  for (long r = 0; r < runs; ++r) {
    auto g = vdetail::rng(seed, 8, r);
    const int n = static_cast<int>(vdetail::unif_int(g, 2, 8));
    const ComputeModel m = vdetail::random_model(g, n, static_cast<int>(r % 2));
    HeteroProblem hp(n, 5, 0.1);
    const double sigma2 = vdetail::unif(g, 0.0, 3.0 * n);
    const double eps = 1.0;
    RunConfig rc{m, hp, static_cast<std::uint64_t>(r), StopRule{.max_k = 40}, {.trace = true}};
    const bool pf = r % 4 >= 2;
    const RunRecord rec = pf ? malenia_param_free(rc, 0.05) : malenia(rc, 0.05, sigma2, eps);
    ++c.total;
    c.passed += malenia_trace_ok(rec.trace, n, pf ? 1.0 : malenia_threshold(n, sigma2, eps));
  }
  return c;
}

inline Check check_sandwich(long allocations, long trials, std::uint64_t seed) {
  Check c{"sandwich_bound"};
  for (long r = 0; r < allocations; ++r) {
    auto g = vdetail::rng(seed, 9, r);
    const int n = static_cast<int>(vdetail::unif_int(g, 1, 5));
    const long B = vdetail::unif_int(g, 1, 23);
    std::vector<Distribution> d;
    std::vector<double> mu;
    double eta = 0.0;
    for (int i = 0; i < n; ++i) {
      d.push_back(Distribution::exponential(vdetail::unif(g, 0.5, 5.0)));
      mu.push_back(d.back().mean());
      eta = std::max(eta, d.back().orlicz_upper() / mu.back());
    }
    Allocation a(n, 0);
    for (long b = 0; b < B; ++b) ++a[vdetail::unif_int(g, 0, n - 1)];
    const McEstimate e = expected_cost_mc(a, d, trials, seed + static_cast<std::uint64_t>(r));
    const double l = proxy_loss(a, mu);
    ++c.total;
    c.passed += e.mean >= l - 3.0 * e.stderr_ &&
                e.mean <= theory::sandwich_factor(eta, B) * l + 3.0 * e.stderr_;
  }
  return c;
}

// Empirical P(s_i <= mu_i) for both score forms at confidence delta.
inline std::pair<double, double> coverage(long reps, double delta, std::uint64_t seed) {
  const double k = 1.0 / std::sqrt(delta);  // ln(2k^2) = ln(2/delta)
  long hit_a = 0, hit_e = 0, total_n = 0;
  const long Ks[] = {1, 10, 100};
  // The norm is positively homogeneous, so one quadrature serves every scale.
  const double unit_alpha = Distribution::shifted_exponential(1.0, 1.0).orlicz_upper();
  for (long r = 0; r < reps; ++r) {
    auto g = vdetail::rng(seed, 10, r);
    const double s = vdetail::unif(g, 0.5, 5.0);
    const Distribution d = Distribution::shifted_exponential(s, s);
    const double alpha = s * unit_alpha;
    for (long K : Ks) {
      LcbState a(1, LcbMode::alpha, alpha), e(1, LcbMode::eta, 1.0);
      double sum = 0.0;
      for (long j = 0; j < K; ++j) sum += d.sample(g);
      a.K[0] = e.K[0] = K;
      a.T[0] = e.T[0] = sum;
      hit_a += lcb_score(a, 0, k) <= d.mean();
      hit_e += lcb_score(e, 0, k) <= d.mean();
      ++total_n;
    }
  }
  return {static_cast<double>(hit_a) / total_n, static_cast<double>(hit_e) / total_n};
}

inline Check check_coverage(long reps, std::uint64_t seed) {
  Check c{"lcb_coverage"};
  const auto [a, e] = coverage(reps, 0.05, seed);
  c.total = 2;
  c.passed = (a >= 0.94) + (e >= 0.94);
  return c;
}

inline Check check_theory(long trials, std::uint64_t seed) {
  Check c{"theory_evaluators"};
  for (long t = 0; t < trials; ++t) {
    auto g = vdetail::rng(seed, 11, t);
    const int n = static_cast<int>(vdetail::unif_int(g, 1, 12));
    std::vector<double> taus = vdetail::sorted_taus(g, n);
    const double ratio = std::exp(vdetail::unif(g, -3.0, 5.0));
    // Direct enumeration of (m^{-1} sum 1/tau)^{-1} (1 + ratio/m).
    long best_m = 1;
    double best = kInf;
    for (int m = 1; m <= n; ++m) {
      double inv = 0.0;
      for (int i = 0; i < m; ++i) inv += 1.0 / taus[i];
      const double v = m / inv * (1.0 + ratio / m);
      if (v < best * (1.0 - 1e-12)) best = v, best_m = m;
    }
    bool ok = theory::select_m_star(taus, ratio, 1.0) == best_m;
    const auto cf = theory::closed_form_T(taus, 1.0, 1.0, ratio, 1.0);
    ok = ok && cf.T_R <= cf.T_A * (1.0 + 1e-12);
    const long R = vdetail::unif_int(g, 1, 50);
    ok = ok && theory::t_of_R(taus, R) <= theory::t_of_R(taus, R + 1);
    std::vector<double> slower = taus;
    slower.back() *= 1.5;
    ok = ok && theory::t_of_R(taus, R) <= theory::t_of_R(slower, R);
    ++c.total;
    c.passed += ok;
  }
  return c;
}

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {"ras",       "ringmaster", "ringleader", "malenia",
                                                 "sandwich",  "coverage",   "theory"};
  return names;
}

// trials <= 0 uses each check's default size.
inline std::vector<Check> run_suite(const std::string& suite, long trials, std::uint64_t seed) {
  auto n = [&](long def) { return trials > 0 ? trials : def; };
  std::vector<Check> out;
  const bool all = suite == "all";
  if (all || suite == "ras") {
    out.push_back(check_ras(n(500), seed));
    out.push_back(check_ras_exchange(n(10000), seed));
  }
  if (all || suite == "ringmaster") {
    out.push_back(check_delay_law(n(100), seed));
    out.push_back(check_adaptive_form(n(50), seed));
    out.push_back(check_timing(n(50), seed));
    out.push_back(check_universal_timing(n(50), seed));
  }
  if (all || suite == "ringleader") out.push_back(check_ringleader(n(100), seed));
  if (all || suite == "malenia") out.push_back(check_malenia(n(50), seed));
  if (all || suite == "sandwich") out.push_back(check_sandwich(n(50), 100000, seed));
  if (all || suite == "coverage") out.push_back(check_coverage(n(10000), seed));
  if (all || suite == "theory") out.push_back(check_theory(n(1000), seed));
  if (out.empty()) throw std::invalid_argument("verify: unknown suite '" + suite + "'");
  return out;
}

}  // namespace asgd::harness
