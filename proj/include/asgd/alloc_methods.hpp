#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "asgd/allocation.hpp"
#include "asgd/homogeneous.hpp"
#include "asgd/simcore.hpp"

namespace asgd {

// All workers compute back to back; the round ends at the B-th completion
// and everything still running is cancelled.
class GtaServer final : public Server {
 public:
  explicit GtaServer(long B) : B_(B) {
    if (B_ < 1) throw std::invalid_argument("gta: B must be >= 1");
  }
  void on_init(Engine& e) override {
    counts_.assign(e.n(), 0);
    for (int w = 0; w < e.n(); ++w) e.request(w);
  }
  void on_arrival(Engine& e, const Arrival& a) override {
    ++counts_[a.worker];
    useful_ += a.duration();
    if (++done_ < B_) {
      e.classify(a, Action::buffered);
      e.resume(a.worker);
      return;
    }
    e.classify(a, Action::applied);
    cost_ = e.now();
    for (int w = 0; w < e.n(); ++w)
      if (e.busy(w)) e.terminate(w);
    e.tick({.batch = double(B_)});
    e.halt("round_done");
  }

  const Allocation& counts() const { return counts_; }
  double cost() const { return cost_; }
  double useful() const { return useful_; }

 private:
  long B_;
  long done_ = 0;
  double cost_ = 0.0;
  double useful_ = 0.0;
  Allocation counts_;
};

struct GtaResult {
  double cost;
  Allocation counts;
  double wasted;
  long terminations;
  RunRecord record;
};

inline GtaResult gta(const ComputeModel& model, long B, std::uint64_t seed, std::uint64_t round = 0,
                     bool trace = false) {
  static const NullObjective none;
  EngineOptions o;
  o.trace = trace;
  // A worker starts at most B + 1 tasks per round, so counters never collide.
  o.counter_offset = round * static_cast<std::uint64_t>(B + 1);
  Engine eng(model, none, seed, {}, o);
  eng.record().method = "gta";
  GtaServer s(B);
  RunRecord r = eng.run(s, StopRule{});
  long term = 0;
  for (const auto& w : r.workers) term += w.terminated;
  return {s.cost(), s.counts(), r.total_busy() - s.useful(), term, std::move(r)};
}

// Shared state for the two optimizer wrappers: one allocation per round.
class AtaRounds {
 public:
  AtaRounds(LcbState st, long B) : st_(std::move(st)), B_(B) {
    if (B_ < 1) throw std::invalid_argument("ata: B must be >= 1");
  }
  void begin(int n) {
    a_ = ras(lcb(st_), B_);
    remaining_ = a_;
    sums_.assign(n, 0.0);
    done_ = 0;
    allocations_.push_back(a_);
  }
  void observe(int w, double duration) {
    sums_[w] += duration;
    --remaining_[w];
    ++done_;
  }
  bool worker_has_more(int w) const { return remaining_[w] > 0; }
  bool round_done() const { return done_ == B_; }
  void end() { lcb_update(st_, a_, sums_); }

  const Allocation& current() const { return a_; }
  const LcbState& state() const { return st_; }
  const std::vector<Allocation>& history() const { return allocations_; }
  long B() const { return B_; }

 private:
  LcbState st_;
  long B_;
  Allocation a_, remaining_;
  std::vector<double> sums_;
  long done_ = 0;
  std::vector<Allocation> allocations_;
};

// Minibatch of B gradients at x^k, split across workers by the allocation.
class SgdAtaServer final : public Server {
 public:
  SgdAtaServer(double gamma, AtaRounds rounds) : gamma_(gamma), r_(std::move(rounds)) {}
  void on_init(Engine& e) override {
    sum_.assign(e.x().size(), 0.0);
    start(e);
  }
  void on_arrival(Engine& e, const Arrival& a) override {
    for (std::size_t i = 0; i < sum_.size(); ++i) sum_[i] += a.grad[i];
    r_.observe(a.worker, a.duration());
    if (!r_.round_done()) {
      e.classify(a, Action::buffered);
      if (r_.worker_has_more(a.worker)) e.resume(a.worker);
      return;
    }
    e.classify(a, Action::applied);
    for (double& v : sum_) v /= static_cast<double>(r_.B());
    e.apply(sum_, gamma_, {.batch = double(r_.B())});
    std::fill(sum_.begin(), sum_.end(), 0.0);
    r_.end();
    start(e);
  }
  const AtaRounds& rounds() const { return r_; }

 private:
  void start(Engine& e) {
    r_.begin(e.n());
    for (int w = 0; w < e.n(); ++w)
      if (r_.current()[w] > 0) e.request(w);
  }
  double gamma_;
  AtaRounds r_;
  Vec sum_;
};

// B asynchronous updates per allocation; worker i contributes exactly a_i.
class AsgdAtaServer final : public Server {
 public:
  AsgdAtaServer(double gamma, AtaRounds rounds) : gamma_(gamma), r_(std::move(rounds)) {}
  void on_init(Engine& e) override { start(e); }
  void on_arrival(Engine& e, const Arrival& a) override {
    e.classify(a, Action::applied);
    e.apply(a.grad, gamma_, {.worker = a.worker, .max_delay = e.k() - a.k_computed_at});
    r_.observe(a.worker, a.duration());
    if (r_.worker_has_more(a.worker)) e.request(a.worker);
    if (r_.round_done()) {
      r_.end();
      start(e);
    }
  }
  const AtaRounds& rounds() const { return r_; }

 private:
  void start(Engine& e) {
    r_.begin(e.n());
    for (int w = 0; w < e.n(); ++w)
      if (r_.current()[w] > 0) e.request(w);
  }
  double gamma_;
  AtaRounds r_;
};

inline RunRecord sgd_ata(const RunConfig& c, double gamma, long B, LcbState st) {
  SgdAtaServer s(gamma, AtaRounds(std::move(st), B));
  return run_server(c, s, "sgd_ata");
}

inline RunRecord asgd_ata(const RunConfig& c, double gamma, long B, LcbState st) {
  AsgdAtaServer s(gamma, AtaRounds(std::move(st), B));
  return run_server(c, s, "asgd_ata");
}

inline RunRecord sgd_gta(const RunConfig& c, double gamma, long B) {
  RennalaServer s(gamma, B);
  return run_server(c, s, "sgd_gta");
}

enum class AllocMethod { ata, ata_empirical, ofta, uta, gta };

struct AllocRunResult {
  std::vector<double> proxy_losses;
  std::vector<double> costs;
  std::vector<double> cum_regret;
  std::vector<char> optimal;  // round achieved the optimal proxy loss
  Allocation best;
  double best_loss = 0.0;
  double total_cost = 0.0;
  double total_cost_best = 0.0;
};

// Allocation-only experiment over K rounds with stochastic arm times.
inline AllocRunResult run_allocation(AllocMethod m, const std::vector<Distribution>& dists, long B,
                                     long K, std::uint64_t seed, double param) {
  const int n = static_cast<int>(dists.size());
  std::vector<double> mu;
  for (const auto& d : dists) mu.push_back(d.mean());
  RegretLedger ledger(mu, B);
  AllocRunResult out;
  out.best = ledger.best();
  out.best_loss = ledger.best_loss();
  LcbState st(n, m == AllocMethod::ata_empirical ? LcbMode::eta : LcbMode::alpha, param);
  const ComputeModel model = m == AllocMethod::gta ? ComputeModel::stochastic(dists) : ComputeModel{};
  const Allocation fixed_uta = m == AllocMethod::uta ? uta(n, B, seed) : Allocation{};
  for (long r = 0; r < K; ++r) {
    const std::uint64_t round = static_cast<std::uint64_t>(r);
    Allocation a;
    double cost = 0.0;
    switch (m) {
      case AllocMethod::ata:
      case AllocMethod::ata_empirical: {
        a = ras(lcb(st), B);
        const std::vector<double> sums = sample_sums(a, dists, seed, round, Stream::allocation);
        cost = cost_of_sums(a, sums);
        lcb_update(st, a, sums);
        break;
      }
      case AllocMethod::ofta:
      case AllocMethod::uta: {
        a = m == AllocMethod::ofta ? out.best : fixed_uta;
        cost = cost_of_sums(a, sample_sums(a, dists, seed, round, Stream::allocation));
        break;
      }
      case AllocMethod::gta: {
        GtaResult g = gta(model, B, seed, round);
        a = g.counts;
        cost = g.cost;
        break;
      }
    }
    const double best_cost =
        cost_of_sums(out.best, sample_sums(out.best, dists, seed, round, Stream::allocation));
    ledger.add(a, cost, best_cost);
    out.proxy_losses.push_back(proxy_loss(a, mu));
    out.costs.push_back(cost);
    out.optimal.push_back(proxy_loss(a, mu) == out.best_loss ? 1 : 0);
  }
  out.cum_regret = ledger.cumulative();
  out.total_cost = ledger.total_cost();
  out.total_cost_best = ledger.total_cost_best();
  return out;
}

}  // namespace asgd
