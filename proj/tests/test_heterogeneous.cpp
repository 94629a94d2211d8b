#include <gtest/gtest.h>

#include <random>

#include "asgd/heterogeneous.hpp"

using namespace asgd;

namespace {

Vec plain_sgd(const QuadraticProblem& q, double gamma, long K, std::uint64_t seed) {
  Vec x(q.dim(), 0.0), g;
  for (long k = 0; k < K; ++k) {
    q.stochastic_gradient(x, 0, static_cast<std::uint64_t>(k), seed, g);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= gamma * g[i];
  }
  return x;
}

std::vector<TraceEvent> arrivals(const RunRecord& r) {
  std::vector<TraceEvent> out;
  for (const auto& t : r.trace)
    if (t.action == Action::applied || t.action == Action::buffered || t.action == Action::discarded)
      out.push_back(t);
  return out;
}

ComputeModel random_fixed(std::mt19937_64& g, int n) {
  std::uniform_real_distribution<double> u(1.0, 10.0);
  std::vector<double> t(n);
  for (double& v : t) v = u(g);
  return ComputeModel::fixed(t);
}

}  // namespace

TEST(TableEstimator, Examples) {
  const Vec g{1.0, -2.0, 0.5};
  GradientTable t(2, 3);
  t.add(0, g, 0);
  t.add(1, g, 0);
  EXPECT_EQ(table_estimator(t), g);

  const Vec v{3.0, 1.0, -1.0};
  GradientTable u(2, 3);
  u.add(0, v, 0);
  u.add(0, v, 0);
  u.add(1, v, 0);
  EXPECT_EQ(u.count(0), 2);
  EXPECT_EQ(table_estimator(u), v);

  GradientTable empty(2, 3);
  empty.add(0, v, 0);
  EXPECT_THROW(table_estimator(empty), std::invalid_argument);
}

TEST(TableEstimator, FreshNoiselessEntriesGiveFullGradient) {
  HeteroProblem h(5, 8, 0.0);
  std::mt19937_64 g(1);
  std::normal_distribution<double> nd;
  Vec x(8);
  for (double& v : x) v = nd(g);
  GradientTable t(5, 8);
  Vec gi;
  for (int i = 0; i < 5; ++i)
    for (int rep = 0; rep <= i; ++rep) {
      h.local_gradient(i, x, rep, 1, gi);
      t.add(i, gi, 0);
    }
  const Vec est = table_estimator(t);
  const Vec full = h.global().full_gradient(x);
  for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(est[j], full[j], 1e-12);
}

TEST(GradientTable, HarmonicAndPurity) {
  GradientTable t(2, 1);
  EXPECT_EQ(t.harmonic(), 0.0);
  t.add(0, {1.0}, 0);
  t.add(1, {1.0}, 0);
  t.add(1, {1.0}, 0);
  t.add(1, {1.0}, 0);
  EXPECT_DOUBLE_EQ(t.harmonic(), 1.5);
  EXPECT_TRUE(t.pure());
  t.add(0, {1.0}, 1);
  EXPECT_FALSE(t.pure());
  EXPECT_EQ(t.max_delay(4), 4);
}

TEST(MaleniaThreshold, Examples) {
  EXPECT_EQ(malenia_threshold(4, 1.0, 1.0), 1.0);  // sigma^2/(n eps) <= 1
  EXPECT_EQ(malenia_threshold(2, 6.0, 1.0), 3.0);
  EXPECT_THROW(malenia_threshold(2, 1.0, 0.0), std::invalid_argument);
}

TEST(Malenia, FiresOnHarmonicRule) {
  HeteroProblem h(2, 3, 0.0);
  {
    // Threshold 1.4: b = (3, 1) gives 1.5 and fires at the first arrival of worker 1.
    const auto m = ComputeModel::fixed({1.0, 3.0});
    MaleniaServer s(0.1, 1.4);
    const RunRecord r = run_server({m, h, 1, {.max_k = 1}, {.trace = true, .log_updates = true}}, s, "malenia");
    ASSERT_EQ(r.updates.size(), 1u);
    EXPECT_DOUBLE_EQ(r.updates[0].time, 3.0);
    EXPECT_DOUBLE_EQ(r.updates[0].batch, 1.5);
  }
  {
    // Equal speeds with threshold 3: b = (1, 1) does not fire; first fire needs harmonic 3.
    const auto m = ComputeModel::fixed({1.0, 1.0});
    MaleniaServer s(0.1, 3.0);
    const RunRecord r = run_server({m, h, 1, {.max_k = 1}, {.log_updates = true}}, s, "malenia");
    ASSERT_EQ(r.updates.size(), 1u);
    EXPECT_DOUBLE_EQ(r.updates[0].time, 3.0);
    EXPECT_DOUBLE_EQ(r.updates[0].batch, 3.0);
  }
}

TEST(Malenia, ParamFreeBanksFastWorker) {
  HeteroProblem h(2, 3, 0.1);
  const auto m = ComputeModel::fixed({1.0, 3.0});
  const RunRecord r = malenia_param_free({m, h, 1, {.max_k = 20}, {.log_updates = true}}, 0.1);
  for (const auto& u : r.updates) EXPECT_GE(u.batch, 1.5);
  EXPECT_TRUE(r.warnings.empty());
  const auto st = ComputeModel::stochastic({Distribution::exponential(1.0), Distribution::exponential(2.0)});
  EXPECT_FALSE(malenia_param_free({st, h, 1, {.max_k = 2}}, 0.1).warnings.empty());
}

TEST(Malenia, SingleWorkerIsPlainSgd) {
  HeteroProblem h(1, 4, 0.2);
  const auto m = ComputeModel::fixed({2.0});
  EXPECT_EQ(malenia_param_free({m, h, 3, {.max_k = 25}}, 0.3).x, plain_sgd(h.global(), 0.3, 25, 3));
}

TEST(Ia2sgd, SingleWorkerIsPlainSgd) {
  HeteroProblem h(1, 4, 0.2);
  const auto m = ComputeModel::fixed({2.0});
  EXPECT_EQ(ia2sgd({m, h, 3, {.max_k = 25}}, 0.3).x, plain_sgd(h.global(), 0.3, 25, 3));
}

TEST(Ia2sgd, FrozenEstimatorIsFullGradient) {
  HeteroProblem h(4, 6, 0.0);
  const auto m = ComputeModel::fixed({1.0, 2.0, 3.5, 4.0});
  Ia2sgdServer s(0.0);
  run_server({m, h, 1, {.max_k = 40}}, s, "ia2sgd");
  const Vec est = table_estimator(s.table());
  const Vec full = h.global().full_gradient(Vec(6, 0.0));
  for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(est[j], full[j], 1e-15);
}

TEST(Ia2sgd, SlowWorkerDelay) {
  HeteroProblem h(2, 3, 0.1);
  const auto m = ComputeModel::fixed({1.0, 3.0});
  const RunRecord r = ia2sgd({m, h, 1, {.max_k = 200}, {.log_updates = true}}, 0.05);
  long mx = 0;
  for (const auto& u : r.updates) mx = std::max(mx, u.max_delay);
  EXPECT_GE(mx, 4);
}

TEST(Ia2sgd, EntriesAreFresh) {
  HeteroProblem h(4, 3, 0.1);
  std::mt19937_64 g(5);
  for (int rep = 0; rep < 20; ++rep) {
    const auto m = random_fixed(g, 4);
    Ia2sgdServer s(0.05);
    const RunRecord r = run_server({m, h, 1, {.max_k = 60}, {.trace = true}}, s, "ia2sgd");
    std::vector<long> last(4, -1);
    for (const auto& t : arrivals(r)) last[t.worker] = t.k_computed_at;
    for (int i = 0; i < 4; ++i) EXPECT_EQ(s.table().computed_at(i), last[i]);
  }
}

TEST(Ia2sgd, IncrementalSumMatchesDirect) {
  // The running sum is re-derived every n updates; compare against a fresh estimator.
  HeteroProblem h(3, 5, 0.3);
  const auto m = ComputeModel::fixed({1.0, 1.9, 2.6});
  for (long K : {3L, 10L, 31L, 100L}) {
    Ia2sgdServer s(0.0);
    run_server({m, h, 2, {.max_k = K}}, s, "ia2sgd");
    Vec direct(5, 0.0);
    for (int i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 5; ++j) direct[j] += s.table().sum(i)[j] / 3.0;
    const Vec est = table_estimator(s.table());
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(est[j], direct[j], 1e-15);
  }
}

TEST(Ringleader, HandTraceTwoWorkers) {
  HeteroProblem h(2, 3, 0.0);
  const auto m = ComputeModel::fixed({1.0, 2.0});
  const RunRecord r = ringleader({m, h, 1, {.max_k = 2}, {.trace = true, .log_updates = true}}, 0.1);
  ASSERT_EQ(r.updates.size(), 2u);
  EXPECT_DOUBLE_EQ(r.updates[0].time, 2.0);
  EXPECT_EQ(r.updates[0].worker, 1);  // the arrival completing Phase 1 starts Phase 2
  EXPECT_DOUBLE_EQ(r.updates[0].batch, 4.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.updates[1].time, 3.0);
  EXPECT_EQ(r.updates[1].worker, 0);
  EXPECT_LE(r.updates[1].time, 2.0 * 2.0);
}

TEST(Ringleader, SingleWorkerIsPlainSgd) {
  HeteroProblem h(1, 4, 0.2);
  const auto m = ComputeModel::fixed({2.0});
  EXPECT_EQ(ringleader({m, h, 3, {.max_k = 25}}, 0.3).x, plain_sgd(h.global(), 0.3, 25, 3));
}

TEST(Ringleader, ConservationAndStructure) {
  std::mt19937_64 g(17);
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 2 + rep % 6;
    HeteroProblem h(n, 3, 0.1);
    ComputeModel m = rep % 2 ? random_fixed(g, n)
                             : ComputeModel::stochastic(std::vector<Distribution>(n, Distribution::exponential(2.0)));
    const RunRecord r = ringleader({m, h, static_cast<std::uint64_t>(rep), {.max_k = 8L * n},
                                    {.trace = true, .log_updates = true}},
                                   0.05);
    long applied = 0, buffered = 0, received = 0;
    for (const auto& w : r.workers) {
      applied += w.applied;
      buffered += w.buffered;
      EXPECT_EQ(w.discarded, 0);
      EXPECT_EQ(w.terminated, 0);
    }
    received = static_cast<long>(arrivals(r).size());
    EXPECT_EQ(applied + buffered, received);
    EXPECT_EQ(applied, static_cast<long>(r.updates.size()));
    ASSERT_EQ(r.updates.size() % n, 0u);
    for (std::size_t i = 0; i < r.updates.size(); i += n) {
      std::vector<int> seen(n, 0);
      for (int j = 0; j < n; ++j) {
        const auto& u = r.updates[i + j];
        ++seen[u.worker];
        EXPECT_LE(u.max_delay, 2L * n - 2);
        EXPECT_TRUE(u.pure);
        EXPECT_GE(u.batch, 1.0);
      }
      for (int c : seen) EXPECT_EQ(c, 1);
    }
  }
}

TEST(RingleaderUniversal, ThresholdOneMatchesRingleader) {
  HeteroProblem h(3, 4, 0.2);
  const auto m = ComputeModel::fixed({1.0, 2.2, 3.1});
  const RunRecord a = ringleader({m, h, 1, {.max_k = 60}}, 0.1);
  const RunRecord b = ringleader_universal({m, h, 1, {.max_k = 60}}, 0.1, 0.5, 1.0);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.time, b.time);
}

TEST(RingleaderUniversal, ThresholdTwoWaitsForTwoEach) {
  HeteroProblem h(2, 4, 0.2);
  const auto m = ComputeModel::fixed({1.0, 1.0});
  const RunRecord r = ringleader_universal({m, h, 1, {.max_k = 1}, {.log_updates = true}}, 0.1, 8.0, 2.0);
  ASSERT_EQ(r.updates.size(), 1u);
  EXPECT_DOUBLE_EQ(r.updates[0].time, 2.0);
  EXPECT_DOUBLE_EQ(r.updates[0].batch, 2.0);
  EXPECT_EQ(r.total_discarded(), 0);
}
