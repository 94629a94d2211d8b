#pragma once

// Experiment configuration: an INI-style key-value file.
//
//   method = ringmaster            # method id, see kOptimizerMethods / kRegretMethods
//   n = 20
//   seeds = 1, 2, 3                # or: seed = 7
//
//   [problem]   kind = quad | hetero_quad, d, sigma
//   [model]     preset = <name> | taus = 1, 2, 3 | dists = exp:2, shifted_exp:29:29, ...
//               seed = <u64>       # preset seed, defaults to the run seed
//   [params]    gamma, gamma_grid, R, B, sigma2, eps, alpha, eta, lcb = alpha | eta
//   [stop]      max_k, grad_tol, max_time, event_cap, rounds
//   [output]    csv, trace
//
// Comments must start the line (# or ;). Unknown sections or keys are errors.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "asgd/simcore.hpp"
#include "asgd/timemodel.hpp"

namespace asgd::harness {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline const std::set<std::string> kOptimizerMethods = {
    "hero",     "minibatch",  "naive_asgd", "rennala",    "naive_optimal_asgd",
    "ringmaster", "ringmaster_stops", "malenia", "malenia_pf", "ia2sgd",
    "ringleader", "ringleader_universal", "sgd_ata", "asgd_ata", "sgd_gta"};
inline const std::set<std::string> kRegretMethods = {"ata", "ata_empirical", "ofta", "uta", "gta"};

struct ProblemSpec {
  std::string kind = "quad";
  long d = 100;
  double sigma = 0.01;
};

struct ModelSpec {
  std::string preset;
  std::vector<double> taus;
  std::vector<Distribution> dists;
  std::optional<std::uint64_t> seed;
};

struct MethodParams {
  std::optional<double> gamma;
  std::vector<double> gamma_grid;
  long R = 0;  // 0: derived from sigma2 / eps
  long B = 0;
  std::optional<double> sigma2;  // default: the problem's noise variance
  std::optional<double> eps;     // default: stop.grad_tol, else 1e-5
  std::optional<double> alpha;   // default: max Orlicz bound of the arms
  double eta = 1.0;
  std::string lcb = "alpha";
};

struct ExperimentConfig {
  std::string method;
  int n = 20;
  std::vector<std::uint64_t> seeds{0};
  ProblemSpec problem;
  ModelSpec model;
  MethodParams params;
  StopRule stop;
  long rounds = 0;
  std::string csv_path;
  std::string trace_path;

  bool is_regret() const { return kRegretMethods.count(method) > 0; }
};

namespace detail {

inline std::string trim(std::string s) {
  const auto a = s.find_first_not_of(" \t\r\"'");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\"'");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || p != end || !std::isfinite(x))
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return x;
}

inline long to_long(const std::string& key, const std::string& v) {
  long x = 0;
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || p != end) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return x;
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || p != end) throw ConfigError(key + ": expected a seed, got '" + v + "'");
  return x;
}

}  // namespace detail

// "kind:p1[:p2]" with an optional "@shift" suffix, e.g. "exp:2", "shifted_exp:29:29",
// "lognormal:0:1@5".
inline Distribution parse_distribution(const std::string& text) {
  std::string body = text;
  double shift = 0.0;
  if (auto at = body.find('@'); at != std::string::npos) {
    shift = detail::to_double("dists", body.substr(at + 1));
    body = body.substr(0, at);
  }
  const auto parts = detail::split(body, ':');
  if (parts.empty()) throw ConfigError("dists: empty distribution");
  auto arg = [&](std::size_t i) {
    if (i >= parts.size()) throw ConfigError("dists: '" + text + "' is missing a parameter");
    return detail::to_double("dists", parts[i]);
  };
  const std::string& k = parts[0];
  std::size_t want = 2;
  Distribution d;
  if (k == "exp") d = Distribution::exponential(arg(1));
  else if (k == "shifted_exp") d = Distribution::shifted_exponential(arg(1), arg(2)), want = 3;
  else if (k == "uniform") d = Distribution::uniform(arg(1), arg(2)), want = 3;
  else if (k == "half_normal") d = Distribution::half_normal(arg(1));
  else if (k == "lognormal") d = Distribution::lognormal(arg(1), arg(2)), want = 3;
  else if (k == "gamma") d = Distribution::gamma(arg(1), arg(2)), want = 3;
  else if (k == "det") d = Distribution::deterministic(arg(1));
  else throw ConfigError("dists: unknown distribution kind '" + k + "'");
  if (parts.size() != want) throw ConfigError("dists: '" + text + "' has extra parameters");
  if (shift != 0.0) d = d.shifted(shift);
  try {
    d.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("dists: ") + e.what());
  }
  return d;
}

// "5^-5..5^5" or "0.1,0.2,0.5".
inline std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  if (auto dots = text.find(".."); dots != std::string::npos) {
    const std::string lo = detail::trim(text.substr(0, dots));
    const std::string hi = detail::trim(text.substr(dots + 2));
    const auto c1 = lo.find('^'), c2 = hi.find('^');
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw ConfigError("grid: range must look like b^p..b^q, got '" + text + "'");
    const double base = detail::to_double("grid", lo.substr(0, c1));
    if (base != detail::to_double("grid", hi.substr(0, c2)))
      throw ConfigError("grid: range endpoints need the same base");
    const long p = detail::to_long("grid", lo.substr(c1 + 1));
    const long q = detail::to_long("grid", hi.substr(c2 + 1));
    if (p > q) throw ConfigError("grid: empty range '" + text + "'");
    for (long e = p; e <= q; ++e) out.push_back(std::pow(base, static_cast<double>(e)));
    return out;
  }
  for (const auto& item : detail::split(text, ',')) out.push_back(detail::to_double("grid", item));
  if (out.empty()) throw ConfigError("grid: no values in '" + text + "'");
  return out;
}

inline void validate(const ExperimentConfig& c) {
  if (c.method.empty()) throw ConfigError("method: missing");
  if (!kOptimizerMethods.count(c.method) && !c.is_regret())
    throw ConfigError("method: unknown method id '" + c.method + "'");
  if (c.n < 1) throw ConfigError("n: must be >= 1");
  if (c.seeds.empty()) throw ConfigError("seeds: empty");
  if (c.problem.kind != "quad" && c.problem.kind != "hetero_quad")
    throw ConfigError("problem.kind: must be quad or hetero_quad");
  if (c.problem.d < 1) throw ConfigError("problem.d: must be >= 1");
  if (c.problem.sigma < 0.0) throw ConfigError("problem.sigma: must be >= 0");
  const int sources = (!c.model.preset.empty()) + (!c.model.taus.empty()) + (!c.model.dists.empty());
  if (sources != 1) throw ConfigError("model: give exactly one of preset, taus, dists");
  if (!c.model.taus.empty() && static_cast<int>(c.model.taus.size()) != c.n)
    throw ConfigError("model.taus: length must equal n");
  if (!c.model.dists.empty() && static_cast<int>(c.model.dists.size()) != c.n)
    throw ConfigError("model.dists: length must equal n");
  for (double t : c.model.taus)
    if (!(t > 0.0)) throw ConfigError("model.taus: times must be > 0");
  const auto& p = c.params;
  if (p.gamma && !(*p.gamma > 0.0)) throw ConfigError("params.gamma: must be > 0");
  for (double g : p.gamma_grid)
    if (!(g > 0.0)) throw ConfigError("params.gamma_grid: values must be > 0");
  if (p.R < 0 || p.B < 0) throw ConfigError("params: R and B must be >= 1 when given");
  if (p.sigma2 && *p.sigma2 < 0.0) throw ConfigError("params.sigma2: must be >= 0");
  if (p.eps && !(*p.eps > 0.0)) throw ConfigError("params.eps: must be > 0");
  if (p.alpha && !(*p.alpha > 0.0)) throw ConfigError("params.alpha: must be > 0");
  if (!(p.eta > 0.0)) throw ConfigError("params.eta: must be > 0");
  if (p.lcb != "alpha" && p.lcb != "eta") throw ConfigError("params.lcb: must be alpha or eta");
  if (c.is_regret()) {
    if (c.rounds < 1) throw ConfigError("stop.rounds: regret runs need rounds >= 1");
    if (c.model.preset == "fixed_linear_jitter" || !c.model.taus.empty())
      throw ConfigError("model: regret runs need stochastic arms");
  } else if (c.stop.max_k < 0 && c.stop.grad_tol < 0.0 && !std::isfinite(c.stop.max_time)) {
    throw ConfigError("stop: give at least one of max_k, grad_tol, max_time");
  }
  if (c.stop.event_cap < 1) throw ConfigError("stop.event_cap: must be >= 1");
}

inline ExperimentConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("syntax: ") + e.what());
  }

  static const std::map<std::string, std::set<std::string>> schema = {
      {"", {"method", "n", "seed", "seeds"}},
      {"problem", {"kind", "d", "sigma"}},
      {"model", {"preset", "taus", "dists", "seed"}},
      {"params", {"gamma", "gamma_grid", "R", "B", "sigma2", "eps", "alpha", "eta", "lcb"}},
      {"stop", {"max_k", "grad_tol", "max_time", "event_cap", "rounds"}},
      {"output", {"csv", "trace"}},
  };

  ExperimentConfig c;
  auto top_key = [&](const std::string& key, const std::string& v) {
    if (key == "method") c.method = v;
    else if (key == "n") c.n = static_cast<int>(detail::to_long(key, v));
    else if (key == "seed") c.seeds = {detail::to_u64(key, v)};
    else if (key == "seeds") {
      c.seeds.clear();
      for (const auto& s : detail::split(v, ',')) c.seeds.push_back(detail::to_u64(key, s));
    }
  };
  auto section_key = [&](const std::string& sec, const std::string& key, const std::string& v) {
    const std::string name = sec + "." + key;
    if (sec == "problem") {
      if (key == "kind") c.problem.kind = v;
      else if (key == "d") c.problem.d = detail::to_long(name, v);
      else c.problem.sigma = detail::to_double(name, v);
    } else if (sec == "model") {
      if (key == "preset") c.model.preset = v;
      else if (key == "seed") c.model.seed = detail::to_u64(name, v);
      else if (key == "taus")
        for (const auto& t : detail::split(v, ',')) c.model.taus.push_back(detail::to_double(name, t));
      else
        for (const auto& d : detail::split(v, ',')) c.model.dists.push_back(parse_distribution(d));
    } else if (sec == "params") {
      auto& p = c.params;
      if (key == "gamma") p.gamma = detail::to_double(name, v);
      else if (key == "gamma_grid") p.gamma_grid = parse_grid(v);
      else if (key == "R") p.R = detail::to_long(name, v);
      else if (key == "B") p.B = detail::to_long(name, v);
      else if (key == "sigma2") p.sigma2 = detail::to_double(name, v);
      else if (key == "eps") p.eps = detail::to_double(name, v);
      else if (key == "alpha") p.alpha = detail::to_double(name, v);
      else if (key == "eta") p.eta = detail::to_double(name, v);
      else p.lcb = v;
    } else if (sec == "stop") {
      if (key == "max_k") c.stop.max_k = detail::to_long(name, v);
      else if (key == "grad_tol") c.stop.grad_tol = detail::to_double(name, v);
      else if (key == "max_time") c.stop.max_time = detail::to_double(name, v);
      else if (key == "event_cap") c.stop.event_cap = detail::to_long(name, v);
      else c.rounds = detail::to_long(name, v);
    } else {
      if (key == "csv") c.csv_path = v;
      else c.trace_path = v;
    }
  };

  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      if (!schema.at("").count(name)) throw ConfigError("unknown key '" + name + "'");
      top_key(name, detail::trim(node.data()));
      continue;
    }
    auto sec = schema.find(name);
    if (sec == schema.end() || name.empty()) throw ConfigError("unknown section [" + name + "]");
    for (const auto& [key, leaf] : node) {
      if (!sec->second.count(key)) throw ConfigError("unknown key '" + name + "." + key + "'");
      section_key(name, key, detail::trim(leaf.data()));
    }
  }
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(f);
}

}  // namespace asgd::harness
