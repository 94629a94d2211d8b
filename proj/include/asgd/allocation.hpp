#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "asgd/rng.hpp"
#include "asgd/timemodel.hpp"

namespace asgd {

using Allocation = std::vector<long>;

inline long total(const Allocation& a) { return std::accumulate(a.begin(), a.end(), 0L); }

inline double proxy_loss(const Allocation& a, const std::vector<double>& lam) {
  if (a.size() != lam.size()) throw std::invalid_argument("proxy_loss: length mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != 0) m = std::max(m, static_cast<double>(a[i]) * lam[i]);
  return m;
}

// |argmax_i a_i s_i|, using the same products as proxy_loss.
inline long argmax_cardinality(const Allocation& a, const std::vector<double>& s) {
  const double m = proxy_loss(a, s);
  long c = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (static_cast<double>(a[i]) * s[i] == m) ++c;
  return c;
}

namespace detail {

inline void check_scores(const std::vector<double>& s) {
  if (s.empty()) throw std::invalid_argument("ras: empty scores");
  for (double v : s)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw std::invalid_argument("ras: scores must be finite and nonnegative");
}

}  // namespace detail

// Recursive allocation selection, written as a loop over the budget.
inline Allocation ras(const std::vector<double>& scores, long B) {
  if (B < 1) throw std::invalid_argument("ras: B must be >= 1");
  detail::check_scores(scores);
  const std::size_t n = scores.size();

  std::vector<std::size_t> zeros;
  for (std::size_t i = 0; i < n; ++i)
    if (scores[i] == 0.0) zeros.push_back(i);
  if (!zeros.empty()) {
    Allocation a(n, 0);
    const long z = static_cast<long>(zeros.size());
    for (long j = 0; j < z; ++j) a[zeros[j]] = B / z + (j < B % z ? 1 : 0);
    return a;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return scores[x] < scores[y]; });
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = scores[order[i]];

  std::vector<long> a(n, 0);
  a[0] = 1;
  std::vector<double> prod(n);
  for (long b = 2; b <= B; ++b) {
    std::size_t r = n;
    if (a[n - 1] == 0)
      r = static_cast<std::size_t>(std::find(a.begin(), a.end(), 0L) - a.begin()) + 1;

    for (std::size_t i = 0; i < n; ++i) prod[i] = static_cast<double>(a[i]) * s[i];

    std::size_t best = 0;
    double best_loss = kInf;
    long best_card = 0;
    for (std::size_t j = 0; j < r; ++j) {
      const double bumped = static_cast<double>(a[j] + 1) * s[j];
      double loss = bumped;
      for (std::size_t i = 0; i < r; ++i)
        if (i != j) loss = std::max(loss, prod[i]);
      long card = 0;
      for (std::size_t i = 0; i < r; ++i)
        if ((i == j ? bumped : prod[i]) == loss) ++card;
      if (loss < best_loss || (loss == best_loss && card < best_card)) {
        best = j;
        best_loss = loss;
        best_card = card;
      }
    }
    ++a[best];
  }

  Allocation out(n, 0);
  for (std::size_t i = 0; i < n; ++i) out[order[i]] = a[i];
  return out;
}

struct BruteForceResult {
  Allocation a;
  double loss;
  long min_cardinality;
};

inline double binomial(long n, long k) {
  double r = 1.0;
  for (long i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

// Exhaustive search over all compositions of B into n parts.
inline BruteForceResult brute_force_alloc(const std::vector<double>& scores, long B) {
  if (B < 1) throw std::invalid_argument("brute_force_alloc: B must be >= 1");
  detail::check_scores(scores);
  const long n = static_cast<long>(scores.size());
  if (binomial(n + B - 1, B) > 1e6)
    throw std::length_error("brute_force_alloc: more than 1e6 allocations");

  BruteForceResult best{{}, kInf, 0};
  Allocation a(n, 0);
  std::function<void(long, long)> rec = [&](long i, long left) {
    if (i == n - 1) {
      a[i] = left;
      const double l = proxy_loss(a, scores);
      const long c = argmax_cardinality(a, scores);
      if (l < best.loss || (l == best.loss && c < best.min_cardinality)) best = {a, l, c};
      return;
    }
    for (long v = 0; v <= left; ++v) {
      a[i] = v;
      rec(i + 1, left - v);
    }
  };
  rec(0, B);
  return best;
}

// k_i: smallest integer with (a_i + k_i) mu_i > l(a, mu).
inline std::vector<long> extra_units(const Allocation& a, const std::vector<double>& mu) {
  const double l = proxy_loss(a, mu);
  std::vector<long> k(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    long v = 1;
    while (static_cast<double>(a[i] + v) * mu[i] <= l) ++v;
    k[i] = v;
  }
  return k;
}

inline double log_term(double k) { return std::log(2.0 * k * k); }

// Width of the confidence interval at round k after K_i samples.
inline double conf_bound(double alpha, long K_i, double k) {
  if (alpha < 0.0 || K_i < 0) throw std::invalid_argument("conf_bound: negative input");
  if (k < 1.0) throw std::invalid_argument("conf_bound: k must be >= 1");
  if (K_i == 0) return kInf;
  const double l = log_term(k) / static_cast<double>(K_i);
  return 2.0 * alpha * (std::sqrt(l) + l);
}

enum class LcbMode { alpha, eta };

struct LcbState {
  LcbMode mode = LcbMode::alpha;
  double param = 1.0;  // alpha in alpha mode, eta in eta mode
  std::vector<long> K;
  std::vector<double> T;
  long k = 1;

  LcbState() = default;
  LcbState(int n, LcbMode m, double p) : mode(m), param(p), K(n, 0), T(n, 0.0) {
    if (n < 1) throw std::invalid_argument("lcb: n must be >= 1");
    if (!(p >= 0.0)) throw std::invalid_argument("lcb: parameter must be >= 0");
  }

  int n() const { return static_cast<int>(K.size()); }
  double mu_hat(int i) const { return K[i] > 0 ? T[i] / static_cast<double>(K[i]) : 0.0; }
};

inline double lcb_score(const LcbState& st, int i, double k) {
  if (st.K[i] == 0) return 0.0;
  const double mu = st.mu_hat(i);
  if (st.mode == LcbMode::alpha) return std::max(0.0, mu - conf_bound(st.param, st.K[i], k));
  const double l = log_term(k) / static_cast<double>(st.K[i]);
  return std::max(0.0, mu * (1.0 - 2.0 * st.param * (std::sqrt(l) + l)));
}

inline std::vector<double> lcb(const LcbState& st) {
  std::vector<double> s(st.n());
  for (int i = 0; i < st.n(); ++i) s[i] = lcb_score(st, i, static_cast<double>(st.k));
  return s;
}

// Partial feedback: only arms with a_i != 0 change.
inline void lcb_update(LcbState& st, const Allocation& a, const std::vector<double>& sums) {
  if (a.size() != st.K.size() || sums.size() != st.K.size())
    throw std::invalid_argument("lcb_update: observation length differs from allocation");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == 0) continue;
    st.K[i] += a[i];
    st.T[i] += sums[i];
  }
  ++st.k;
}

using Observer = std::function<std::vector<double>(const Allocation&)>;

inline Allocation ata_round(LcbState& st, long B, const Observer& observe) {
  Allocation a = ras(lcb(st), B);
  lcb_update(st, a, observe(a));
  return a;
}

inline Allocation ofta(const std::vector<double>& mu, long B) { return ras(mu, B); }

inline Allocation uta(int n, long B, std::uint64_t seed) {
  if (n < 1 || B < 1) throw std::invalid_argument("uta: need n >= 1 and B >= 1");
  Allocation a(n, 0);
  if (n <= B) {
    for (int i = 0; i < n; ++i) a[i] = B / n + (i < B % n ? 1 : 0);
    return a;
  }
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  CounterRng g(seed, Stream::allocation, 0, 0);
  std::shuffle(idx.begin(), idx.end(), g);
  for (long j = 0; j < B; ++j) a[idx[j]] = 1;
  return a;
}

// durations[i] holds the a_i task times of arm i.
inline double realized_cost(const Allocation& a, const std::vector<std::vector<double>>& durations) {
  if (durations.size() != a.size()) throw std::invalid_argument("realized_cost: shape mismatch");
  double c = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (static_cast<long>(durations[i].size()) != a[i])
      throw std::invalid_argument("realized_cost: shape mismatch");
    if (a[i] == 0) continue;
    c = std::max(c, std::accumulate(durations[i].begin(), durations[i].end(), 0.0));
  }
  return c;
}

// Sum of a_i draws per arm; arm i in round r draws sequentially from its own key.
inline std::vector<double> sample_sums(const Allocation& a, const std::vector<Distribution>& d,
                                       std::uint64_t seed, std::uint64_t round, Stream stream) {
  std::vector<double> sums(a.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == 0) continue;
    CounterRng g(seed, stream, i, round);
    for (long u = 0; u < a[i]; ++u) sums[i] += d[i].sample(g);
  }
  return sums;
}

inline double cost_of_sums(const Allocation& a, const std::vector<double>& sums) {
  double c = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != 0) c = std::max(c, sums[i]);
  return c;
}

struct McEstimate {
  double mean;
  double stderr_;
};

inline McEstimate expected_cost_mc(const Allocation& a, const std::vector<Distribution>& d,
                                   long trials, std::uint64_t seed) {
  if (trials < 1000) throw std::invalid_argument("expected_cost_mc: need at least 1000 trials");
  if (a.size() != d.size()) throw std::invalid_argument("expected_cost_mc: shape mismatch");
  double sum = 0.0, sq = 0.0;
  for (long t = 0; t < trials; ++t) {
    const double c = cost_of_sums(a, sample_sums(a, d, seed, static_cast<std::uint64_t>(t),
                                                 Stream::sampling));
    sum += c;
    sq += c * c;
  }
  const double m = sum / static_cast<double>(trials);
  const double var = std::max(0.0, sq / static_cast<double>(trials) - m * m);
  return {m, std::sqrt(var / static_cast<double>(trials))};
}

// Proxy-loss regret against the optimal fixed allocation, plus realized costs.
class RegretLedger {
 public:
  RegretLedger(std::vector<double> mu, long B)
      : mu_(std::move(mu)), best_(ras(mu_, B)), best_loss_(proxy_loss(best_, mu_)) {}

  void add(const Allocation& a, double realized = 0.0, double realized_best = 0.0) {
    cum_loss_ += proxy_loss(a, mu_);
    ++rounds_;
    cumulative_.push_back(cum_loss_ - static_cast<double>(rounds_) * best_loss_);
    cost_ += realized;
    cost_best_ += realized_best;
    if (proxy_loss(a, mu_) == best_loss_) optimal_rounds_.push_back(rounds_);
  }

  const Allocation& best() const { return best_; }
  double best_loss() const { return best_loss_; }
  long rounds() const { return rounds_; }
  const std::vector<double>& cumulative() const { return cumulative_; }
  double total_cost() const { return cost_; }
  double total_cost_best() const { return cost_best_; }
  // Rounds (1-based) whose proxy loss equalled the optimum.
  const std::vector<long>& optimal_rounds() const { return optimal_rounds_; }

 private:
  std::vector<double> mu_;
  Allocation best_;
  double best_loss_;
  double cum_loss_ = 0.0;
  long rounds_ = 0;
  std::vector<double> cumulative_;
  double cost_ = 0.0;
  double cost_best_ = 0.0;
  std::vector<long> optimal_rounds_;
};

struct RegretSeries {
  std::vector<double> cumulative;  // R_K
  std::vector<double> averaged;    // R_K / K
  std::vector<double> per_log;     // R_K / ln K, 0 at K = 1
};

inline RegretSeries regret_report(const RegretLedger& ledger) {
  RegretSeries r;
  r.cumulative = ledger.cumulative();
  for (std::size_t i = 0; i < r.cumulative.size(); ++i) {
    const double K = static_cast<double>(i + 1);
    r.averaged.push_back(r.cumulative[i] / K);
    r.per_log.push_back(i == 0 ? 0.0 : r.cumulative[i] / std::log(K));
  }
  return r;
}

}  // namespace asgd
