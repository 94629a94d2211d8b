#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "asgd/problem.hpp"
#include "asgd/timemodel.hpp"

namespace asgd {

enum class Action { applied, buffered, discarded, terminated, requested };

inline const char* action_name(Action a) {
  switch (a) {
    case Action::applied: return "applied";
    case Action::buffered: return "buffered";
    case Action::discarded: return "discarded";
    case Action::terminated: return "terminated";
    case Action::requested: return "requested";
  }
  return "?";
}

struct TraceEvent {
  double time;
  int worker;
  long k_computed_at;
  long k_current;
  Action action;
};

// One server update. k is the index of the iterate it produced.
struct UpdateInfo {
  double time = 0.0;
  long k = 0;
  int worker = -1;     // recipient of the new model, -1 for broadcasts
  double batch = 1.0;  // gradients averaged, or the harmonic batch size
  long max_delay = 0;  // largest staleness among the gradients used
  bool pure = true;    // every table entry held gradients from one point
};

struct Sample {
  long k;
  double vtime;
  double grad_norm_sq;
  double subopt;
  double total_busy;
  long discarded;
};

struct WorkerStats {
  double cumulative_busy = 0.0;
  long tasks_started = 0;
  long applied = 0;
  long buffered = 0;
  long discarded = 0;   // discarded arrivals
  long terminated = 0;  // cancelled tasks
  long in_flight = 0;
};

struct RunRecord {
  std::string method;
  std::uint64_t seed = 0;
  long k = 0;
  double time = 0.0;
  long events = 0;
  std::string stop_reason;
  std::optional<double> hit_time;  // first time grad_norm_sq <= tolerance
  long hit_k = -1;
  std::vector<Sample> samples;
  std::vector<TraceEvent> trace;
  std::vector<UpdateInfo> updates;
  std::vector<WorkerStats> workers;
  std::vector<std::string> warnings;
  Vec x;

  long total_discarded() const {
    long s = 0;
    for (const auto& w : workers) s += w.discarded + w.terminated;
    return s;
  }
  double total_busy() const {
    double s = 0.0;
    for (const auto& w : workers) s += w.cumulative_busy;
    return s;
  }
};

class BudgetExceeded : public std::runtime_error {
 public:
  explicit BudgetExceeded(RunRecord partial)
      : std::runtime_error("event cap reached before the stop rule fired"),
        partial_(std::move(partial)) {}
  const RunRecord& partial() const { return partial_; }

 private:
  RunRecord partial_;
};

struct StopRule {
  long max_k = -1;                 // stop once k >= max_k
  double grad_tol = -1.0;          // stop once grad_norm_sq <= grad_tol
  double max_time = kInf;          // never process events after this time
  long event_cap = 100'000'000;    // arrivals processed before BudgetExceeded
  double divergence = 1e12;        // grad_norm_sq above this ends the run
};

struct EngineOptions {
  bool trace = false;
  bool log_updates = false;
  long sample_every = 0;  // 0: max(1, max_k / 2000), or 1 without max_k
  std::uint64_t counter_offset = 0;
};

struct Arrival {
  int worker;
  long k_computed_at;
  std::uint64_t task;
  double start;
  double time;
  const Vec& grad;
  double duration() const { return time - start; }
};

class Engine;

class Server {
 public:
  virtual ~Server() = default;
  virtual void on_init(Engine& eng) = 0;
  virtual void on_arrival(Engine& eng, const Arrival& a) = 0;
};

class Engine {
 public:
  Engine(const ComputeModel& model, const Objective& obj, std::uint64_t seed, Vec x0 = {},
         EngineOptions opts = {})
      : model_(model), obj_(obj), seed_(seed), opts_(opts), x_(std::move(x0)) {
    model_.validate();
    if (x_.empty()) x_.assign(obj_.dim(), 0.0);
    if (x_.size() != obj_.dim()) throw std::invalid_argument("engine: x0 has wrong dimension");
    const int n = model_.n();
    workers_.resize(n);
    rec_.workers.resize(n);
  }

  RunRecord run(Server& server, const StopRule& stop) {
    stop_ = stop;
    stride_ = opts_.sample_every > 0 ? opts_.sample_every
              : stop.max_k > 0       ? std::max(1L, stop.max_k / 2000)
                                     : 1;
    rec_.seed = seed_;
    gnorm_ = obj_.grad_norm_sq(x_);
    check_hit();
    push_sample();
    server.on_init(*this);

    while (rec_.stop_reason.empty()) {
      if (stop.max_k >= 0 && k_ >= stop.max_k) {
        rec_.stop_reason = "max_k";
        break;
      }
      if (stop.grad_tol >= 0.0 && rec_.hit_time) {
        rec_.stop_reason = "grad_tol";
        break;
      }
      if (queue_.empty()) {
        rec_.stop_reason = "stalled";
        break;
      }
      const Event ev = queue_.top();
      if (ev.time > stop.max_time) {
        rec_.stop_reason = "max_time";
        break;
      }
      queue_.pop();
      Worker& w = workers_[ev.worker];
      if (!w.busy || w.seq != ev.seq) continue;  // cancelled by terminate
      if (rec_.events >= stop.event_cap) {
        finish();
        throw BudgetExceeded(rec_);
      }
      ++rec_.events;
      now_ = ev.time;
      w.busy = false;
      rec_.workers[ev.worker].cumulative_busy += now_ - w.start;
      obj_.sample_gradient(ev.worker, w.x, w.task, seed_, grad_);
      const Arrival a{ev.worker, w.k, w.task, w.start, now_, grad_};
      classified_ = 0;
      server.on_arrival(*this, a);
      if (classified_ != 1)
        throw std::logic_error("engine: arrival must be classified exactly once");
    }
    finish();
    return rec_;
  }

  // --- primitives available to servers ---
  int n() const { return static_cast<int>(workers_.size()); }
  double now() const { return now_; }
  long k() const { return k_; }
  const Vec& x() const { return x_; }
  std::uint64_t seed() const { return seed_; }
  const ComputeModel& model() const { return model_; }
  const Objective& objective() const { return obj_; }
  bool busy(int w) const { return worker(w).busy; }
  long assigned_k(int w) const { return worker(w).k; }
  RunRecord& record() { return rec_; }

  // Start a task on an idle worker at the current model.
  void request(int w) {
    Worker& s = worker(w);
    s.x = x_;
    s.k = k_;
    start_task(w);
  }

  // Start a task on an idle worker at the point it already holds.
  void resume(int w) { start_task(w); }

  void terminate(int w) {
    Worker& s = worker(w);
    if (!s.busy) {
      trace(w, s.k, Action::terminated);
      return;
    }
    s.busy = false;
    ++s.seq;
    rec_.workers[w].cumulative_busy += now_ - s.start;
    ++rec_.workers[w].terminated;
    trace(w, s.k, Action::terminated);
  }

  void classify(const Arrival& a, Action act) {
    ++classified_;
    WorkerStats& st = rec_.workers[a.worker];
    switch (act) {
      case Action::applied: ++st.applied; break;
      case Action::buffered: ++st.buffered; break;
      case Action::discarded: ++st.discarded; break;
      default: throw std::logic_error("engine: arrivals are applied, buffered or discarded");
    }
    trace(a.worker, a.k_computed_at, act);
  }

  // x <- x - gamma * dir, then k <- k + 1.
  void apply(const Vec& dir, double gamma, UpdateInfo info = {}) {
    for (std::size_t i = 0; i < x_.size(); ++i) x_[i] -= gamma * dir[i];
    ++k_;
    gnorm_ = obj_.grad_norm_sq(x_);
    if (opts_.log_updates) {
      info.time = now_;
      info.k = k_;
      rec_.updates.push_back(info);
    }
    check_hit();
    if (k_ % stride_ == 0) push_sample();
    if (!std::isfinite(gnorm_) || gnorm_ > stop_.divergence) rec_.stop_reason = "diverged";
  }

  // Bookkeeping-only iteration (no model), used by allocation baselines.
  void tick(UpdateInfo info = {}) {
    ++k_;
    if (opts_.log_updates) {
      info.time = now_;
      info.k = k_;
      rec_.updates.push_back(info);
    }
    if (k_ % stride_ == 0) push_sample();
  }

  void halt(const std::string& reason) { rec_.stop_reason = reason; }
  void warn(const std::string& w) { rec_.warnings.push_back(w); }

  double total_busy_now() const {
    double s = 0.0;
    for (int w = 0; w < n(); ++w) {
      s += rec_.workers[w].cumulative_busy;
      if (workers_[w].busy) s += now_ - workers_[w].start;
    }
    return s;
  }

 private:
  struct Worker {
    bool busy = false;
    double start = 0.0;
    long k = 0;
    std::uint64_t task = 0;
    std::uint64_t seq = 0;
    Vec x;
  };

  struct Event {
    double time;
    int worker;
    std::uint64_t seq;
    bool operator>(const Event& o) const {
      if (time != o.time) return time > o.time;
      if (worker != o.worker) return worker > o.worker;
      return seq > o.seq;
    }
  };

  Worker& worker(int w) {
    if (w < 0 || w >= n()) throw std::out_of_range("engine: no such worker");
    return workers_[w];
  }
  const Worker& worker(int w) const {
    if (w < 0 || w >= n()) throw std::out_of_range("engine: no such worker");
    return workers_[w];
  }

  void start_task(int w) {
    Worker& s = worker(w);
    if (s.busy) throw std::logic_error("engine: worker is already busy");
    WorkerStats& st = rec_.workers[w];
    s.task = opts_.counter_offset + static_cast<std::uint64_t>(st.tasks_started);
    ++st.tasks_started;
    s.busy = true;
    s.start = now_;
    ++s.seq;
    double done;
    if (model_.kind == ModelKind::universal)
      done = model_.power[w].time_to_accumulate(now_, 1.0);
    else
      done = now_ + sample_duration(model_, w, s.task, seed_);
    if (std::isfinite(done)) queue_.push({done, w, s.seq});
    trace(w, s.k, Action::requested);
  }

  void trace(int w, long k_at, Action a) {
    if (opts_.trace) rec_.trace.push_back({now_, w, k_at, k_, a});
  }

  void check_hit() {
    if (!rec_.hit_time && stop_.grad_tol >= 0.0 && gnorm_ <= stop_.grad_tol) {
      rec_.hit_time = now_;
      rec_.hit_k = k_;
    }
  }

  void push_sample() {
    rec_.samples.push_back({k_, now_, gnorm_, obj_.suboptimality(x_), total_busy_now(),
                            discarded_now()});
  }

  long discarded_now() const {
    long s = 0;
    for (const auto& w : rec_.workers) s += w.discarded + w.terminated;
    return s;
  }

  void finish() {
    if (rec_.samples.empty() || rec_.samples.back().k != k_) push_sample();
    rec_.k = k_;
    rec_.time = now_;
    rec_.x = x_;
    // Busy time of unfinished tasks is credited up to the stop instant.
    for (int w = 0; w < n(); ++w) {
      rec_.workers[w].in_flight = workers_[w].busy ? 1 : 0;
      if (workers_[w].busy) {
        rec_.workers[w].cumulative_busy += now_ - workers_[w].start;
        workers_[w].start = now_;
      }
    }
  }

  const ComputeModel& model_;
  const Objective& obj_;
  std::uint64_t seed_;
  EngineOptions opts_;
  StopRule stop_;
  long stride_ = 1;
  Vec x_;
  long k_ = 0;
  double now_ = 0.0;
  double gnorm_ = 0.0;
  int classified_ = 0;
  Vec grad_;
  std::vector<Worker> workers_;
  RunRecord rec_;
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> queue_;
};

}  // namespace asgd
