#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "asgd/simcore.hpp"
#include "asgd/theory.hpp"

namespace asgd {

struct RunConfig {
  const ComputeModel& model;
  const Objective& obj;
  std::uint64_t seed = 0;
  StopRule stop{};
  EngineOptions opts{};
  Vec x0{};
};

inline RunRecord run_server(const RunConfig& c, Server& s, const std::string& method) {
  Engine eng(c.model, c.obj, c.seed, c.x0, c.opts);
  eng.record().method = method;
  return eng.run(s, c.stop);
}

// Worker indices ordered by mean time per gradient, ties by index.
inline std::vector<int> workers_by_speed(const ComputeModel& m) {
  const std::vector<double> mu = m.means();
  std::vector<int> idx(mu.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return mu[a] < mu[b]; });
  return idx;
}

inline void require_fixed(const ComputeModel& m, const char* who) {
  if (m.kind != ModelKind::fixed)
    throw std::domain_error(std::string(who) + ": requires the fixed computation model");
}

class HeroServer final : public Server {
 public:
  explicit HeroServer(double gamma) : gamma_(gamma) {}
  void on_init(Engine& e) override {
    worker_ = workers_by_speed(e.model()).front();
    e.request(worker_);
  }
  void on_arrival(Engine& e, const Arrival& a) override {
    e.classify(a, Action::applied);
    e.apply(a.grad, gamma_, {.worker = a.worker, .max_delay = e.k() - a.k_computed_at});
    e.request(a.worker);
  }

 private:
  double gamma_;
  int worker_ = 0;
};

class MinibatchServer final : public Server {
 public:
  explicit MinibatchServer(double gamma) : gamma_(gamma) {}
  void on_init(Engine& e) override {
    sum_.assign(e.x().size(), 0.0);
    for (int w = 0; w < e.n(); ++w) e.request(w);
  }
  void on_arrival(Engine& e, const Arrival& a) override {
    for (std::size_t i = 0; i < sum_.size(); ++i) sum_[i] += a.grad[i];
    if (++count_ < e.n()) {
      e.classify(a, Action::buffered);
      return;
    }
    e.classify(a, Action::applied);
    for (double& v : sum_) v /= e.n();
    e.apply(sum_, gamma_, {.batch = double(e.n())});
    std::fill(sum_.begin(), sum_.end(), 0.0);
    count_ = 0;
    for (int w = 0; w < e.n(); ++w) e.request(w);
  }

 private:
  double gamma_;
  int count_ = 0;
  Vec sum_;
};

enum class RingmasterVariant { no_stops, with_stops };

// Also serves as Naive ASGD (R unbounded) and Naive Optimal ASGD (subset).
class RingmasterServer final : public Server {
 public:
  RingmasterServer(double gamma, long R, RingmasterVariant v, std::vector<int> active = {})
      : gamma_(gamma), R_(R), variant_(v), active_(std::move(active)) {
    if (R_ < 1) throw std::invalid_argument("ringmaster: R must be >= 1");
  }
  void on_init(Engine& e) override {
    if (active_.empty()) {
      active_.resize(e.n());
      std::iota(active_.begin(), active_.end(), 0);
    }
    for (int w : active_) e.request(w);
  }
  void on_arrival(Engine& e, const Arrival& a) override {
    const long delay = e.k() - a.k_computed_at;
    if (delay >= R_) {
      e.classify(a, Action::discarded);
      e.request(a.worker);
      return;
    }
    e.classify(a, Action::applied);
    e.apply(a.grad, gamma_, {.worker = a.worker, .max_delay = delay});
    e.request(a.worker);
    if (variant_ == RingmasterVariant::with_stops) {
      // Top of the next loop iteration: restart every worker that just went stale.
      for (int w : active_)
        if (e.busy(w) && e.k() - e.assigned_k(w) >= R_) {
          e.terminate(w);
          e.request(w);
        }
    }
  }

 private:
  double gamma_;
  long R_;
  RingmasterVariant variant_;
  std::vector<int> active_;
};

class RennalaServer final : public Server {
 public:
  RennalaServer(double gamma, long B) : gamma_(gamma), B_(B) {
    if (B_ < 1) throw std::invalid_argument("rennala: B must be >= 1");
  }
  void on_init(Engine& e) override {
    sum_.assign(e.x().size(), 0.0);
    for (int w = 0; w < e.n(); ++w) e.request(w);
  }
  void on_arrival(Engine& e, const Arrival& a) override {
    if (a.k_computed_at != e.k()) {
      e.classify(a, Action::discarded);
      e.request(a.worker);
      return;
    }
    for (std::size_t i = 0; i < sum_.size(); ++i) sum_[i] += a.grad[i];
    if (++count_ < B_) {
      e.classify(a, Action::buffered);
      e.request(a.worker);
      return;
    }
    e.classify(a, Action::applied);
    for (double& v : sum_) v /= static_cast<double>(B_);
    e.apply(sum_, gamma_, {.batch = double(B_)});
    std::fill(sum_.begin(), sum_.end(), 0.0);
    count_ = 0;
    for (int w = 0; w < e.n(); ++w) {
      if (e.busy(w)) e.terminate(w);
      e.request(w);
    }
  }

 private:
  double gamma_;
  long B_;
  long count_ = 0;
  Vec sum_;
};

inline RunRecord hero_sgd(const RunConfig& c, double gamma) {
  require_fixed(c.model, "hero_sgd");
  HeroServer s(gamma);
  return run_server(c, s, "hero");
}

inline RunRecord naive_minibatch(const RunConfig& c, double gamma) {
  MinibatchServer s(gamma);
  return run_server(c, s, "minibatch");
}

inline constexpr long kNoDelayLimit = std::numeric_limits<long>::max();

inline RunRecord naive_asgd(const RunConfig& c, double gamma) {
  RingmasterServer s(gamma, kNoDelayLimit, RingmasterVariant::no_stops);
  return run_server(c, s, "naive_asgd");
}

inline RunRecord rennala(const RunConfig& c, double gamma, long B) {
  RennalaServer s(gamma, B);
  return run_server(c, s, "rennala");
}

inline long select_m_star(const std::vector<double>& taus, double sigma2, double eps) {
  return theory::select_m_star(taus, sigma2, eps);
}

inline RunRecord naive_optimal_asgd(const RunConfig& c, double gamma, double sigma2, double eps) {
  require_fixed(c.model, "naive_optimal_asgd");
  std::vector<int> order = workers_by_speed(c.model);
  std::vector<double> sorted;
  for (int w : order) sorted.push_back(c.model.tau[w]);
  const long m = select_m_star(sorted, sigma2, eps);
  order.resize(static_cast<std::size_t>(m));
  RingmasterServer s(gamma, kNoDelayLimit, RingmasterVariant::no_stops, order);
  return run_server(c, s, "naive_optimal_asgd");
}

inline RunRecord ringmaster(const RunConfig& c, double gamma, long R, RingmasterVariant v) {
  RingmasterServer s(gamma, R, v);
  return run_server(c, s, v == RingmasterVariant::no_stops ? "ringmaster" : "ringmaster_stops");
}

// Replays a no-stops trace through the virtual-delay recursion: gamma^k is
// nonzero exactly when the virtual delay of the sender is below R, and the
// virtual delay must equal the observed staleness.
inline bool ringmaster_adaptive_form_check(const std::vector<TraceEvent>& trace, long R) {
  std::map<int, long> vdelay;
  for (const auto& ev : trace) {
    if (ev.action == Action::requested) vdelay.try_emplace(ev.worker, 0);
    if (ev.action == Action::requested || ev.action == Action::terminated) continue;
    if (ev.action == Action::buffered)
      throw std::invalid_argument("adaptive form check: trace contains buffered arrivals");
    if (ev.k_computed_at > ev.k_current)
      throw std::invalid_argument("adaptive form check: arrival from the future");
    const long vd = vdelay[ev.worker];
    const bool step = vd < R;
    if (step != (ev.action == Action::applied)) return false;
    if (vd != ev.k_current - ev.k_computed_at) return false;
    if (step)
      for (auto& [w, d] : vdelay)
        if (w != ev.worker) ++d;
    vdelay[ev.worker] = 0;
  }
  return true;
}

}  // namespace asgd
