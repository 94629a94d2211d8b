#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "asgd/homogeneous.hpp"
#include "asgd/simcore.hpp"

namespace asgd {

// Per-worker gradient sums G_i, counts b_i and the iterate each entry was
// computed at. An entry is pure while every gradient in it shares one point.
class GradientTable {
 public:
  GradientTable() = default;
  GradientTable(int n, std::size_t d)
      : G_(n, Vec(d, 0.0)), b_(n, 0), at_(n, -1), pure_(n, 1) {}

  int n() const { return static_cast<int>(b_.size()); }
  long count(int i) const { return b_[i]; }
  long computed_at(int i) const { return at_[i]; }
  const Vec& sum(int i) const { return G_[i]; }
  bool has(int i) const { return b_[i] > 0; }
  bool full() const { return filled_ == n(); }
  int filled() const { return filled_; }

  bool pure() const {
    return std::all_of(pure_.begin(), pure_.end(), [](char p) { return p != 0; });
  }

  void add(int i, const Vec& g, long k_at) {
    if (b_[i] == 0) {
      at_[i] = k_at;
      ++filled_;
    } else if (at_[i] != k_at) {
      pure_[i] = 0;
    }
    for (std::size_t j = 0; j < g.size(); ++j) G_[i][j] += g[j];
    ++b_[i];
  }

  // Overwrite entry i with a single gradient.
  void set(int i, const Vec& g, long k_at) {
    if (b_[i] == 0) ++filled_;
    G_[i] = g;
    b_[i] = 1;
    at_[i] = k_at;
    pure_[i] = 1;
  }

  void clear() {
    for (auto& g : G_) std::fill(g.begin(), g.end(), 0.0);
    std::fill(b_.begin(), b_.end(), 0);
    std::fill(at_.begin(), at_.end(), -1);
    std::fill(pure_.begin(), pure_.end(), 1);
    filled_ = 0;
  }

  // (n^{-1} sum 1/b_i)^{-1}; zero while some entry is empty.
  double harmonic() const {
    if (!full()) return 0.0;
    double s = 0.0;
    for (long b : b_) s += 1.0 / static_cast<double>(b);
    return static_cast<double>(n()) / s;
  }

  long max_delay(long k) const {
    long m = 0;
    for (int i = 0; i < n(); ++i)
      if (b_[i] > 0) m = std::max(m, k - at_[i]);
    return m;
  }

  void swap(GradientTable& o) noexcept {
    G_.swap(o.G_);
    b_.swap(o.b_);
    at_.swap(o.at_);
    pure_.swap(o.pure_);
    std::swap(filled_, o.filled_);
  }

 private:
  std::vector<Vec> G_;
  std::vector<long> b_;
  std::vector<long> at_;
  std::vector<char> pure_;
  int filled_ = 0;
};

// (1/n) sum_i G_i / b_i over a full table.
inline Vec table_estimator(const GradientTable& t) {
  if (!t.full()) throw std::invalid_argument("table_estimator: table has an empty entry");
  Vec out(t.sum(0).size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(t.n());
  for (int i = 0; i < t.n(); ++i) {
    const double w = inv_n / static_cast<double>(t.count(i));
    const Vec& g = t.sum(i);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += w * g[j];
  }
  return out;
}

inline double malenia_threshold(int n, double sigma2, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("malenia: eps must be > 0");
  if (sigma2 < 0.0) throw std::invalid_argument("malenia: sigma2 must be >= 0");
  return std::max(1.0, sigma2 / (static_cast<double>(n) * eps));
}

// Synchronous updates: collect at x^k until the table qualifies, update,
// then cancel everything in flight and broadcast.
class MaleniaServer final : public Server {
 public:
  // threshold <= 1 means "every worker has reported", the parameter-free rule.
  MaleniaServer(double gamma, double threshold) : gamma_(gamma), threshold_(threshold) {}

  void on_init(Engine& e) override {
    table_ = GradientTable(e.n(), e.x().size());
    for (int w = 0; w < e.n(); ++w) e.request(w);
  }

  void on_arrival(Engine& e, const Arrival& a) override {
    if (a.k_computed_at != e.k()) {
      e.classify(a, Action::discarded);
      e.request(a.worker);
      return;
    }
    table_.add(a.worker, a.grad, a.k_computed_at);
    if (!(table_.full() && table_.harmonic() >= threshold_)) {
      e.classify(a, Action::buffered);
      e.resume(a.worker);
      return;
    }
    e.classify(a, Action::applied);
    e.apply(table_estimator(table_), gamma_,
            {.batch = table_.harmonic(), .max_delay = table_.max_delay(e.k()), .pure = table_.pure()});
    table_.clear();
    for (int w = 0; w < e.n(); ++w) {
      if (e.busy(w)) e.terminate(w);
      e.request(w);
    }
  }

 private:
  double gamma_;
  double threshold_;
  GradientTable table_;
};

// Warm-up fills the table at x^0; afterwards every arrival replaces its entry
// and triggers an update whose model goes back to that worker only. The table
// sum is kept incrementally and re-summed once per n updates.
class Ia2sgdServer final : public Server {
 public:
  explicit Ia2sgdServer(double gamma) : gamma_(gamma) {}

  void on_init(Engine& e) override {
    table_ = GradientTable(e.n(), e.x().size());
    sum_.assign(e.x().size(), 0.0);
    for (int w = 0; w < e.n(); ++w) e.request(w);
  }

  void on_arrival(Engine& e, const Arrival& a) override {
    const int n = e.n();
    if (!table_.full()) {
      table_.set(a.worker, a.grad, a.k_computed_at);
      if (!table_.full()) {
        e.classify(a, Action::buffered);
        e.resume(a.worker);
        return;
      }
      resum();
    } else {
      const Vec& old = table_.sum(a.worker);
      for (std::size_t j = 0; j < sum_.size(); ++j) sum_[j] += a.grad[j] - old[j];
      table_.set(a.worker, a.grad, a.k_computed_at);
      if (++since_resum_ == n) resum();
    }
    e.classify(a, Action::applied);
    e.apply(sum_, gamma_ / n, {.worker = a.worker, .batch = 1.0, .max_delay = table_.max_delay(e.k())});
    e.request(a.worker);
  }

  const GradientTable& table() const { return table_; }

 private:
  void resum() {
    std::fill(sum_.begin(), sum_.end(), 0.0);
    for (int i = 0; i < table_.n(); ++i)
      for (std::size_t j = 0; j < sum_.size(); ++j) sum_[j] += table_.sum(i)[j];
    since_resum_ = 0;
  }

  double gamma_;
  GradientTable table_;
  Vec sum_;
  int since_resum_ = 0;
};

// Two-phase rounds of exactly n updates, one per worker. Gradients from a
// worker that already got its model this round go to a carry buffer.
class RingleaderServer final : public Server {
 public:
  // threshold > 1 turns Phase 1 into the harmonic-batch stopping rule.
  RingleaderServer(double gamma, double threshold) : gamma_(gamma), threshold_(threshold) {}

  void on_init(Engine& e) override {
    table_ = GradientTable(e.n(), e.x().size());
    carry_ = GradientTable(e.n(), e.x().size());
    pending_.assign(e.n(), 0);
    for (int w = 0; w < e.n(); ++w) e.request(w);
  }

  void on_arrival(Engine& e, const Arrival& a) override {
    const int j = a.worker;
    if (remaining_ == 0) {
      table_.add(j, a.grad, a.k_computed_at);
      if (table_.full() && table_.harmonic() >= threshold_) {
        std::fill(pending_.begin(), pending_.end(), 1);
        remaining_ = e.n();
        e.classify(a, Action::applied);
        update_for(e, j);
      } else {
        e.classify(a, Action::buffered);
        e.resume(j);
      }
      return;
    }
    if (pending_[j]) {
      table_.add(j, a.grad, a.k_computed_at);
      e.classify(a, Action::applied);
      update_for(e, j);
    } else {
      carry_.add(j, a.grad, a.k_computed_at);
      e.classify(a, Action::buffered);
      e.resume(j);
    }
  }

 private:
  void update_for(Engine& e, int j) {
    e.apply(table_estimator(table_), gamma_,
            {.worker = j,
             .batch = table_.harmonic(),
             .max_delay = table_.max_delay(e.k()),
             .pure = table_.pure()});
    e.request(j);
    pending_[j] = 0;
    if (--remaining_ == 0) {
      table_.swap(carry_);
      carry_.clear();
    }
  }

  double gamma_;
  double threshold_;
  GradientTable table_;
  GradientTable carry_;
  std::vector<char> pending_;
  int remaining_ = 0;
};

inline RunRecord malenia(const RunConfig& c, double gamma, double sigma2, double eps) {
  MaleniaServer s(gamma, malenia_threshold(c.model.n(), sigma2, eps));
  return run_server(c, s, "malenia");
}

inline RunRecord malenia_param_free(const RunConfig& c, double gamma) {
  MaleniaServer s(gamma, 1.0);
  Engine eng(c.model, c.obj, c.seed, c.x0, c.opts);
  eng.record().method = "malenia_pf";
  if (c.model.kind != ModelKind::fixed)
    eng.warn("malenia_pf: optimality only holds under the fixed computation model");
  return eng.run(s, c.stop);
}

inline RunRecord ia2sgd(const RunConfig& c, double gamma) {
  Ia2sgdServer s(gamma);
  return run_server(c, s, "ia2sgd");
}

inline RunRecord ringleader(const RunConfig& c, double gamma) {
  RingleaderServer s(gamma, 1.0);
  return run_server(c, s, "ringleader");
}

inline RunRecord ringleader_universal(const RunConfig& c, double gamma, double sigma2, double eps) {
  RingleaderServer s(gamma, malenia_threshold(c.model.n(), sigma2, eps));
  return run_server(c, s, "ringleader_universal");
}

}  // namespace asgd
