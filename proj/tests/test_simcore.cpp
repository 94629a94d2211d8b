#include <gtest/gtest.h>

#include <functional>

#include "asgd/simcore.hpp"

using namespace asgd;

namespace {

// Applies every arrival and asks the same worker again.
class PlainSgd final : public Server {
 public:
  explicit PlainSgd(double gamma) : gamma_(gamma) {}
  void on_init(Engine& e) override {
    for (int w = 0; w < e.n(); ++w) e.request(w);
  }
  void on_arrival(Engine& e, const Arrival& a) override {
    order.push_back({a.worker, a.time});
    e.classify(a, Action::applied);
    e.apply(a.grad, gamma_, {.worker = a.worker});
    e.request(a.worker);
  }
  std::vector<std::pair<int, double>> order;

 private:
  double gamma_;
};

// Callback-driven server for one-off scenarios.
class Scripted final : public Server {
 public:
  std::function<void(Engine&)> init;
  std::function<void(Engine&, const Arrival&)> arrive;
  void on_init(Engine& e) override { init(e); }
  void on_arrival(Engine& e, const Arrival& a) override { arrive(e, a); }
};

}  // namespace

TEST(Engine, SingleWorkerCompletionTimes) {
  QuadraticProblem q(3, 0.0);
  const auto m = ComputeModel::fixed({1.0});
  Engine e(m, q, 1, {}, {.log_updates = true});
  PlainSgd s(0.5);
  const RunRecord r = e.run(s, {.max_k = 5});
  ASSERT_EQ(r.updates.size(), 5u);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(r.updates[i].time, i + 1.0);
  EXPECT_EQ(r.stop_reason, "max_k");
  EXPECT_EQ(r.k, 5);
}

TEST(Engine, TiesBreakByWorkerId) {
  QuadraticProblem q(3, 0.0);
  const auto m = ComputeModel::fixed({1.0, 1.0, 1.0});
  Engine e(m, q, 1);
  PlainSgd s(0.1);
  e.run(s, {.max_k = 6});
  ASSERT_EQ(s.order.size(), 6u);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(s.order[i].first, i % 3);
}

TEST(Engine, GradientIsAtAssignedPoint) {
  // Worker 1 starts at x0 and is applied after worker 0 moved the model twice.
  QuadraticProblem q(2, 0.0);
  const auto m = ComputeModel::fixed({1.0, 2.5});
  Scripted s;
  std::vector<std::pair<long, long>> seen;
  s.init = [](Engine& e) {
    e.request(0);
    e.request(1);
  };
  s.arrive = [&](Engine& e, const Arrival& a) {
    seen.push_back({a.k_computed_at, e.k()});
    if (a.worker == 1) {
      EXPECT_EQ(a.grad, q.full_gradient(Vec(2, 0.0)));
    }
    e.classify(a, Action::applied);
    e.apply(a.grad, 0.5);
    e.request(a.worker);
  };
  Engine e(m, q, 1);
  e.run(s, {.max_k = 3});
  ASSERT_GE(seen.size(), 3u);
  EXPECT_EQ(seen[2], (std::pair<long, long>{0, 2}));
}

TEST(Engine, TerminateCreditsPartialBusy) {
  QuadraticProblem q(2, 0.0);
  const auto m = ComputeModel::fixed({1.0, 10.0});
  Scripted s;
  s.init = [](Engine& e) {
    e.request(0);
    e.request(1);
  };
  s.arrive = [](Engine& e, const Arrival& a) {
    e.classify(a, Action::applied);
    e.apply(a.grad, 0.1);
    if (e.k() == 3) {
      e.terminate(1);
      e.terminate(1);  // idle: no-op, still traced
      e.halt("done");
      return;
    }
    e.request(a.worker);
  };
  Engine e(m, q, 1, {}, {.trace = true});
  const RunRecord r = e.run(s, {});
  EXPECT_EQ(r.stop_reason, "done");
  EXPECT_DOUBLE_EQ(r.time, 3.0);
  EXPECT_DOUBLE_EQ(r.workers[1].cumulative_busy, 3.0);
  EXPECT_EQ(r.workers[1].terminated, 1);
  EXPECT_EQ(r.workers[1].in_flight, 0);
  long term = 0;
  for (const auto& t : r.trace) term += t.action == Action::terminated;
  EXPECT_EQ(term, 2);
  EXPECT_EQ(r.total_discarded(), 1);
}

TEST(Engine, ArrivalMustBeClassifiedOnce) {
  QuadraticProblem q(2, 0.0);
  const auto m = ComputeModel::fixed({1.0});
  Scripted none;
  none.init = [](Engine& e) { e.request(0); };
  none.arrive = [](Engine&, const Arrival&) {};
  Engine e1(m, q, 1);
  EXPECT_THROW(e1.run(none, {.max_k = 2}), std::logic_error);

  Scripted twice;
  twice.init = none.init;
  twice.arrive = [](Engine& e, const Arrival& a) {
    e.classify(a, Action::buffered);
    e.classify(a, Action::discarded);
  };
  Engine e2(m, q, 1);
  EXPECT_THROW(e2.run(twice, {.max_k = 2}), std::logic_error);
}

TEST(Engine, NonexistentWorker) {
  QuadraticProblem q(2, 0.0);
  const auto m = ComputeModel::fixed({1.0});
  Scripted s;
  s.init = [](Engine& e) { e.request(1); };
  Engine e(m, q, 1);
  EXPECT_THROW(e.run(s, {.max_k = 1}), std::out_of_range);
}

TEST(Engine, BudgetExceededCarriesPartialRecord) {
  QuadraticProblem q(2, 0.0);
  const auto m = ComputeModel::fixed({1.0, 1.5});
  Engine e(m, q, 1);
  PlainSgd s(0.1);
  try {
    e.run(s, {.grad_tol = 0.0, .event_cap = 50});
    FAIL() << "expected BudgetExceeded";
  } catch (const BudgetExceeded& b) {
    EXPECT_EQ(b.partial().events, 50);
    EXPECT_EQ(b.partial().k, 50);
    EXPECT_FALSE(b.partial().samples.empty());
  }
}

TEST(Engine, StopRules) {
  QuadraticProblem q(2, 0.0);
  const auto m = ComputeModel::fixed({1.0});
  {
    Engine e(m, q, 1);
    PlainSgd s(0.5);
    const RunRecord r = e.run(s, {.max_time = 4.5});
    EXPECT_EQ(r.stop_reason, "max_time");
    EXPECT_EQ(r.k, 4);
  }
  {
    Engine e(m, q, 1);
    PlainSgd s(1.0);
    const RunRecord r = e.run(s, {.grad_tol = 1e-6});
    EXPECT_EQ(r.stop_reason, "grad_tol");
    ASSERT_TRUE(r.hit_time.has_value());
    EXPECT_EQ(*r.hit_time, static_cast<double>(r.hit_k));
    EXPECT_LE(q.grad_norm_sq(r.x), 1e-6);
  }
  {
    Engine e(m, q, 1);
    PlainSgd s(9.0);
    EXPECT_EQ(e.run(s, {.max_k = 10000}).stop_reason, "diverged");
  }
}

TEST(Engine, SamplesStrictlyIncreaseInK) {
  QuadraticProblem q(4, 0.1);
  const auto m = ComputeModel::stochastic({Distribution::exponential(1.0), Distribution::exponential(2.0)});
  Engine e(m, q, 4, {}, {.sample_every = 7});
  PlainSgd s(0.2);
  const RunRecord r = e.run(s, {.max_k = 100});
  ASSERT_GE(r.samples.size(), 2u);
  EXPECT_EQ(r.samples.front().k, 0);
  EXPECT_EQ(r.samples.back().k, 100);
  for (std::size_t i = 1; i < r.samples.size(); ++i) {
    EXPECT_LT(r.samples[i - 1].k, r.samples[i].k);
    EXPECT_LE(r.samples[i - 1].vtime, r.samples[i].vtime);
    EXPECT_LE(r.samples[i - 1].total_busy, r.samples[i].total_busy);
  }
}

TEST(Engine, TraceIsTimeOrderedAndDelaysNonnegative) {
  QuadraticProblem q(4, 0.1);
  const auto m = ComputeModel::stochastic(
      {Distribution::exponential(1.0), Distribution::uniform(0.5, 3.0), Distribution::half_normal(2.0)});
  Engine e(m, q, 8, {}, {.trace = true});
  PlainSgd s(0.2);
  const RunRecord r = e.run(s, {.max_k = 300});
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i - 1].time, r.trace[i].time);
  for (const auto& t : r.trace) EXPECT_LE(t.k_computed_at, t.k_current);
}

TEST(Engine, BusyTimeEqualsSumOfDurations) {
  QuadraticProblem q(2, 0.0);
  const auto m = ComputeModel::fixed({1.0, 3.0});
  Engine e(m, q, 1);
  PlainSgd s(0.1);
  const RunRecord r = e.run(s, {.max_time = 30.0});
  // At the stop instant both workers are busy, credited up to t = 30.
  EXPECT_DOUBLE_EQ(r.workers[0].cumulative_busy, 30.0);
  EXPECT_DOUBLE_EQ(r.workers[1].cumulative_busy, 30.0);
}

TEST(Engine, UniversalModelUsesPowerIntegral) {
  QuadraticProblem q(2, 0.0);
  const auto m = ComputeModel::universal({PiecewisePower({0.0, 2.0, 3.0}, {0.25, 0.0, 1.0})});
  Engine e(m, q, 1, {}, {.log_updates = true});
  PlainSgd s(0.1);
  const RunRecord r = e.run(s, {.max_k = 3});
  ASSERT_EQ(r.updates.size(), 3u);
  // 0.5 accumulated by t=2, the remaining 0.5 at rate 1 lands at 3.5, then 4.5, 5.5.
  EXPECT_DOUBLE_EQ(r.updates[0].time, 3.5);
  EXPECT_DOUBLE_EQ(r.updates[1].time, 4.5);
  EXPECT_DOUBLE_EQ(r.updates[2].time, 5.5);
}

TEST(Engine, Determinism) {
  QuadraticProblem q(6, 0.3);
  const auto m = ComputeModel::stochastic({Distribution::exponential(1.0), Distribution::gamma(2.0, 1.0)});
  auto once = [&] {
    Engine e(m, q, 77, {}, {.trace = true});
    PlainSgd s(0.2);
    return e.run(s, {.max_k = 500});
  };
  const RunRecord a = once(), b = once();
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.time, b.time);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    EXPECT_EQ(a.trace[i].time, b.trace[i].time);
    EXPECT_EQ(a.trace[i].worker, b.trace[i].worker);
  }
}
