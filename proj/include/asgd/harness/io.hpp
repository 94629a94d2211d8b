#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "asgd/alloc_methods.hpp"
#include "asgd/simcore.hpp"

namespace asgd::harness {

inline constexpr const char* kCsvHeader =
    "method,seed,k,vtime,grad_norm_sq,subopt,total_busy,discarded,avg_iter_time,cum_regret";

// Shortest round-trip form, so output is byte-stable across runs.
inline std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("fmt: conversion failed");
  return std::string(buf, p);
}

struct MetricRow {
  std::string method;
  std::uint64_t seed = 0;
  long k = 0;
  std::optional<double> vtime, grad_norm_sq, subopt, total_busy;
  std::optional<long> discarded;
  std::optional<double> avg_iter_time, cum_regret;
};

inline std::vector<MetricRow> rows_from_record(const RunRecord& r, const std::string& label = {}) {
  std::vector<MetricRow> out;
  out.reserve(r.samples.size());
  for (const auto& s : r.samples) {
    MetricRow m;
    m.method = label.empty() ? r.method : label;
    m.seed = r.seed;
    m.k = s.k;
    m.vtime = s.vtime;
    m.grad_norm_sq = s.grad_norm_sq;
    m.subopt = s.subopt;
    m.total_busy = s.total_busy;
    m.discarded = s.discarded;
    if (s.k > 0) m.avg_iter_time = s.vtime / static_cast<double>(s.k);
    out.push_back(std::move(m));
  }
  return out;
}

// One row per sampled round: vtime is the cumulative cost, k the round count.
inline std::vector<MetricRow> rows_from_allocation(const AllocRunResult& r, const std::string& method,
                                                   std::uint64_t seed) {
  std::vector<MetricRow> out;
  const long K = static_cast<long>(r.costs.size());
  const long stride = std::max(1L, K / 2000);
  double cost = 0.0;
  for (long i = 0; i < K; ++i) {
    cost += r.costs[i];
    const long k = i + 1;
    if (k % stride != 0 && k != 1 && k != K) continue;
    MetricRow m;
    m.method = method;
    m.seed = seed;
    m.k = k;
    m.vtime = cost;
    m.avg_iter_time = cost / static_cast<double>(k);
    m.cum_regret = r.cum_regret[i];
    out.push_back(std::move(m));
  }
  return out;
}

inline void write_csv(std::ostream& os, const std::vector<MetricRow>& rows) {
  os << kCsvHeader << '\n';
  auto opt = [&](const auto& v) {
    os << ',';
    if (v) {
      if constexpr (std::is_same_v<std::decay_t<decltype(*v)>, double>) os << fmt(*v);
      else os << *v;
    }
  };
  for (const auto& r : rows) {
    if (r.method.find_first_of(",\n\"") != std::string::npos)
      throw std::invalid_argument("csv: method label contains a delimiter");
    os << r.method << ',' << r.seed << ',' << r.k;
    opt(r.vtime);
    opt(r.grad_norm_sq);
    opt(r.subopt);
    opt(r.total_busy);
    opt(r.discarded);
    opt(r.avg_iter_time);
    opt(r.cum_regret);
    os << '\n';
  }
}

inline void emit_csv(const std::vector<MetricRow>& rows, const std::string& path) {
  if (rows.empty()) throw std::invalid_argument("emit_csv: no rows");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("emit_csv: cannot open '" + path + "'");
  write_csv(f, rows);
  if (!f.flush()) throw std::runtime_error("emit_csv: write failed for '" + path + "'");
}

inline std::vector<MetricRow> read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kCsvHeader)
    throw std::runtime_error("read_csv: header mismatch");
  std::vector<MetricRow> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t a = 0;
    for (;;) {
      const auto b = line.find(',', a);
      f.push_back(line.substr(a, b == std::string::npos ? std::string::npos : b - a));
      if (b == std::string::npos) break;
      a = b + 1;
    }
    if (f.size() != 10) throw std::runtime_error("read_csv: expected 10 fields: " + line);
    auto num = [](const std::string& s) -> std::optional<double> {
      if (s.empty()) return std::nullopt;
      double v = 0.0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size())
        throw std::runtime_error("read_csv: bad number '" + s + "'");
      return v;
    };
    MetricRow r;
    r.method = f[0];
    r.seed = std::stoull(f[1]);
    r.k = std::stol(f[2]);
    r.vtime = num(f[3]);
    r.grad_norm_sq = num(f[4]);
    r.subopt = num(f[5]);
    r.total_busy = num(f[6]);
    if (!f[7].empty()) r.discarded = std::stol(f[7]);
    r.avg_iter_time = num(f[8]);
    r.cum_regret = num(f[9]);
    out.push_back(std::move(r));
  }
  return out;
}

inline nlohmann::ordered_json trace_json(const TraceEvent& e) {
  return {{"time", e.time},
          {"worker", e.worker},
          {"k_computed_at", e.k_computed_at},
          {"k_current", e.k_current},
          {"action", action_name(e.action)}};
}

inline Action parse_action(const std::string& s) {
  for (Action a : {Action::applied, Action::buffered, Action::discarded, Action::terminated,
                   Action::requested})
    if (s == action_name(a)) return a;
  throw std::runtime_error("trace: unknown action '" + s + "'");
}

inline void write_jsonl(std::ostream& os, const std::vector<TraceEvent>& trace) {
  for (const auto& e : trace) os << trace_json(e).dump() << '\n';
}

inline void emit_jsonl(const std::vector<TraceEvent>& trace, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("emit_jsonl: cannot open '" + path + "'");
  write_jsonl(f, trace);
  if (!f.flush()) throw std::runtime_error("emit_jsonl: write failed for '" + path + "'");
}

inline std::vector<TraceEvent> read_jsonl(std::istream& is) {
  std::vector<TraceEvent> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    out.push_back({j.at("time").get<double>(), j.at("worker").get<int>(),
                   j.at("k_computed_at").get<long>(), j.at("k_current").get<long>(),
                   parse_action(j.at("action").get<std::string>())});
  }
  return out;
}

inline void write_trace_csv(std::ostream& os, const std::vector<TraceEvent>& trace) {
  os << "time,worker,k_computed_at,k_current,action\n";
  for (const auto& e : trace)
    os << fmt(e.time) << ',' << e.worker << ',' << e.k_computed_at << ',' << e.k_current << ','
       << action_name(e.action) << '\n';
}

inline void write_rows_jsonl(std::ostream& os, const std::vector<MetricRow>& rows) {
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["method"] = r.method;
    j["seed"] = r.seed;
    j["k"] = r.k;
    auto put = [&](const char* key, const auto& v) {
      if (v) j[key] = *v;
      else j[key] = nullptr;
    };
    put("vtime", r.vtime);
    put("grad_norm_sq", r.grad_norm_sq);
    put("subopt", r.subopt);
    put("total_busy", r.total_busy);
    put("discarded", r.discarded);
    put("avg_iter_time", r.avg_iter_time);
    put("cum_regret", r.cum_regret);
    os << j.dump() << '\n';
  }
}

}  // namespace asgd::harness
