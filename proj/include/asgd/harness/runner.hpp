#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "asgd/alloc_methods.hpp"
#include "asgd/harness/config.hpp"
#include "asgd/harness/io.hpp"
#include "asgd/heterogeneous.hpp"
#include "asgd/homogeneous.hpp"
#include "asgd/problem.hpp"
#include "asgd/theory.hpp"

namespace asgd::harness {

inline ComputeModel build_model(const ExperimentConfig& c, std::uint64_t seed) {
  if (!c.model.preset.empty()) {
    try {
      return experiment_times(c.model.preset, c.n, c.model.seed.value_or(seed));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("model.preset: ") + e.what());
    }
  }
  if (!c.model.taus.empty()) return ComputeModel::fixed(c.model.taus);
  return ComputeModel::stochastic(c.model.dists);
}

inline std::unique_ptr<Objective> build_objective(const ExperimentConfig& c) {
  const auto d = static_cast<std::size_t>(c.problem.d);
  if (c.problem.kind == "hetero_quad") return std::make_unique<HeteroProblem>(c.n, d, c.problem.sigma);
  return std::make_unique<QuadraticProblem>(d, c.problem.sigma);
}

// Method parameters after filling defaults from the problem and the model.
struct Resolved {
  double L = 0.0;
  double sigma2 = 0.0;
  double eps = 1e-5;
  long R = 1;
  long B = 1;
  double alpha = 0.0;
  double eta = 1.0;
  LcbMode lcb = LcbMode::alpha;
};

inline Resolved resolve(const ExperimentConfig& c, const ComputeModel& model, const Objective& obj) {
  Resolved r;
  r.L = smoothness_L(obj.dim());
  r.sigma2 = c.params.sigma2.value_or(obj.noise_variance());
  r.eps = c.params.eps.value_or(c.stop.grad_tol > 0.0 ? c.stop.grad_tol : 1e-5);
  r.R = c.params.R > 0 ? c.params.R : theory::optimal_R(r.sigma2, r.eps);
  r.B = c.params.B > 0 ? c.params.B : theory::rennala_B(r.sigma2, r.eps);
  if (c.params.alpha) {
    r.alpha = *c.params.alpha;
  } else if (model.kind == ModelKind::stochastic) {
    for (const auto& d : model.dist) r.alpha = std::max(r.alpha, d.orlicz_upper());
  }
  r.eta = c.params.eta;
  r.lcb = c.params.lcb == "eta" ? LcbMode::eta : LcbMode::alpha;
  return r;
}

inline double minibatch_stepsize(long B, double L, double sigma2, double eps) {
  const double a = 1.0 / (2.0 * L);
  if (sigma2 <= 0.0) return a;
  return std::min(a, eps * static_cast<double>(B) / (4.0 * L * sigma2));
}

// B-hat used by the Ringleader default stepsize.
inline double ringleader_batch(const ComputeModel& m) {
  if (m.kind != ModelKind::fixed) return 1.0;
  std::vector<double> t = m.tau;
  std::sort(t.begin(), t.end());
  return std::max(1.0, theory::harmonic_floor(t));
}

inline double default_gamma(const std::string& method, const Resolved& p, const ComputeModel& m) {
  const long n = m.n();
  if (method == "hero") return theory::ringmaster_stepsize(1, p.L, p.sigma2, p.eps);
  if (method == "naive_asgd" || method == "naive_optimal_asgd")
    return theory::ringmaster_stepsize(n, p.L, p.sigma2, p.eps);
  if (method == "ringmaster" || method == "ringmaster_stops")
    return theory::ringmaster_stepsize(p.R, p.L, p.sigma2, p.eps);
  if (method == "asgd_ata") return theory::ringmaster_stepsize(p.B, p.L, p.sigma2, p.eps);
  if (method == "minibatch") return minibatch_stepsize(n, p.L, p.sigma2, p.eps);
  if (method == "rennala" || method == "sgd_ata" || method == "sgd_gta")
    return minibatch_stepsize(p.B, p.L, p.sigma2, p.eps);
  if (method == "malenia" || method == "malenia_pf") return 1.0 / (2.0 * p.L);
  return theory::ringleader_stepsize(n, p.L, p.sigma2, p.eps, ringleader_batch(m));
}

inline RunRecord run_method(const std::string& method, const RunConfig& rc, double gamma,
                            const Resolved& p) {
  if (method == "hero") return hero_sgd(rc, gamma);
  if (method == "minibatch") return naive_minibatch(rc, gamma);
  if (method == "naive_asgd") return naive_asgd(rc, gamma);
  if (method == "rennala") return rennala(rc, gamma, p.B);
  if (method == "naive_optimal_asgd") return naive_optimal_asgd(rc, gamma, p.sigma2, p.eps);
  if (method == "ringmaster") return ringmaster(rc, gamma, p.R, RingmasterVariant::no_stops);
  if (method == "ringmaster_stops") return ringmaster(rc, gamma, p.R, RingmasterVariant::with_stops);
  if (method == "malenia") return malenia(rc, gamma, p.sigma2, p.eps);
  if (method == "malenia_pf") return malenia_param_free(rc, gamma);
  if (method == "ia2sgd") return ia2sgd(rc, gamma);
  if (method == "ringleader") return ringleader(rc, gamma);
  if (method == "ringleader_universal") return ringleader_universal(rc, gamma, p.sigma2, p.eps);
  const double param = p.lcb == LcbMode::alpha ? p.alpha : p.eta;
  if (method == "sgd_ata") return sgd_ata(rc, gamma, p.B, LcbState(rc.model.n(), p.lcb, param));
  if (method == "asgd_ata") return asgd_ata(rc, gamma, p.B, LcbState(rc.model.n(), p.lcb, param));
  if (method == "sgd_gta") return sgd_gta(rc, gamma, p.B);
  throw ConfigError("method: '" + method + "' is not an optimizer method");
}

struct RunOptions {
  bool trace = false;
  std::optional<double> gamma = std::nullopt;  // overrides config and default
};

// One optimizer run. Throws BudgetExceeded when the event cap is hit.
inline RunRecord run_one(const ExperimentConfig& c, std::uint64_t seed, const RunOptions& o = {}) {
  const ComputeModel model = build_model(c, seed);
  const auto obj = build_objective(c);
  const Resolved p = resolve(c, model, *obj);
  const double gamma = o.gamma ? *o.gamma : c.params.gamma.value_or(default_gamma(c.method, p, model));
  EngineOptions eo;
  eo.trace = o.trace;
  RunConfig rc{model, *obj, seed, c.stop, eo, {}};
  try {
    return run_method(c.method, rc, gamma, p);
  } catch (const std::domain_error& e) {
    throw ConfigError(e.what());
  }
}

inline AllocMethod alloc_method(const std::string& m) {
  if (m == "ata") return AllocMethod::ata;
  if (m == "ata_empirical") return AllocMethod::ata_empirical;
  if (m == "ofta") return AllocMethod::ofta;
  if (m == "uta") return AllocMethod::uta;
  if (m == "gta") return AllocMethod::gta;
  throw ConfigError("method: '" + m + "' is not an allocation method");
}

inline AllocRunResult run_regret(const ExperimentConfig& c, std::uint64_t seed) {
  const ComputeModel model = build_model(c, seed);
  if (model.kind != ModelKind::stochastic) throw ConfigError("model: regret runs need stochastic arms");
  const long B = c.params.B > 0 ? c.params.B : 23;
  const AllocMethod m = alloc_method(c.method);
  double param = c.params.eta;
  if (m == AllocMethod::ata) {
    param = 0.0;
    if (c.params.alpha) param = *c.params.alpha;
    else
      for (const auto& d : model.dist) param = std::max(param, d.orlicz_upper());
    if (!std::isfinite(param))
      throw ConfigError("params.alpha: arms are not sub-exponential, give alpha or use ata_empirical");
  }
  return run_allocation(m, model.dist, B, c.rounds, seed, param);
}

// Worker count for sweeps, capped by ASGD_ARENA_THREADS.
inline unsigned sweep_threads() {
  unsigned t = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("ASGD_ARENA_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) t = std::min<unsigned>(t, static_cast<unsigned>(v));
  }
  return t;
}

// Runs f(i) for i in [0, count) on up to `threads` threads. Results land by index,
// so the merged output does not depend on scheduling.
template <class F>
void parallel_for(std::size_t count, unsigned threads, F&& f) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < std::min<std::size_t>(threads, count); ++t)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < count;) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

struct SweepCell {
  std::uint64_t seed;
  double gamma;
  int n;
  std::string key() const {
    return "n=" + std::to_string(n) + "|seed=" + std::to_string(seed) + "|gamma=" + fmt(gamma);
  }
};

struct SweepResult {
  SweepCell cell;
  RunRecord record;
  bool budget_exceeded = false;
};

// Cross seeds x gammas x ns; each cell owns its engine. Output sorted by cell key.
inline std::vector<SweepResult> sweep(const ExperimentConfig& base, const std::vector<double>& gammas,
                                      const std::vector<int>& ns, unsigned threads) {
  std::vector<SweepCell> cells;
  for (int n : ns)
    for (std::uint64_t s : base.seeds)
      for (double g : gammas) cells.push_back({s, g, n});
  std::vector<SweepResult> out(cells.size());
  parallel_for(cells.size(), threads, [&](std::size_t i) {
    ExperimentConfig c = base;
    c.n = cells[i].n;
    validate(c);
    out[i].cell = cells[i];
    try {
      out[i].record = run_one(c, cells[i].seed, {.gamma = cells[i].gamma});
    } catch (const BudgetExceeded& e) {
      out[i].record = e.partial();
      out[i].budget_exceeded = true;
    }
  });
  std::stable_sort(out.begin(), out.end(), [](const SweepResult& a, const SweepResult& b) {
    if (a.cell.n != b.cell.n) return a.cell.n < b.cell.n;
    if (a.cell.seed != b.cell.seed) return a.cell.seed < b.cell.seed;
    return a.cell.gamma < b.cell.gamma;
  });
  return out;
}

}  // namespace asgd::harness
