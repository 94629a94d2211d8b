#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "asgd/harness/config.hpp"
#include "asgd/harness/io.hpp"
#include "asgd/harness/runner.hpp"
#include "asgd/harness/verify.hpp"

namespace {

using namespace asgd;
using namespace asgd::harness;

enum Exit { kOk = 0, kConfig = 2, kBudget = 3, kVerify = 4 };

int fail(const char* kind, const std::string& msg, int code) {
  nlohmann::ordered_json j{{"error", kind}, {"message", msg}};
  std::cerr << j.dump() << '\n';
  return code;
}

void write_rows(const std::vector<MetricRow>& rows, const std::string& path) {
  if (path.empty() || path == "-") write_csv(std::cout, rows);
  else emit_csv(rows, path);
}

std::vector<std::uint64_t> seeds_for(const ExperimentConfig& c, const std::vector<std::uint64_t>& cli) {
  return cli.empty() ? c.seeds : cli;
}

int cmd_run(const std::string& config, const std::vector<std::uint64_t>& seeds, std::string out,
            std::string trace, double gamma) {
  const ExperimentConfig c = load_config(config);
  if (out.empty()) out = c.csv_path;
  if (trace.empty()) trace = c.trace_path;
  std::vector<MetricRow> rows;
  std::vector<TraceEvent> events;
  for (std::uint64_t s : seeds_for(c, seeds)) {
    if (c.is_regret()) {
      auto part = rows_from_allocation(run_regret(c, s), c.method, s);
      rows.insert(rows.end(), part.begin(), part.end());
      continue;
    }
    RunOptions o;
    o.trace = !trace.empty();
    if (gamma > 0.0) o.gamma = gamma;
    const RunRecord rec = run_one(c, s, o);
    auto part = rows_from_record(rec);
    rows.insert(rows.end(), part.begin(), part.end());
    events.insert(events.end(), rec.trace.begin(), rec.trace.end());
    for (const auto& w : rec.warnings) std::cerr << "warning: " << w << '\n';
  }
  write_rows(rows, out);
  if (!trace.empty()) emit_jsonl(events, trace);
  return kOk;
}

int cmd_regret(const std::string& config, const std::vector<std::uint64_t>& seeds,
               std::string out) {
  const ExperimentConfig c = load_config(config);
  if (!c.is_regret()) throw ConfigError("method: regret needs one of ata, ata_empirical, ofta, uta, gta");
  if (out.empty()) out = c.csv_path;
  std::vector<MetricRow> rows;
  for (std::uint64_t s : seeds_for(c, seeds)) {
    const AllocRunResult r = run_regret(c, s);
    const long K = static_cast<long>(r.cum_regret.size());
    std::cerr << c.method << " seed=" << s << " rounds=" << K
              << " regret=" << fmt(r.cum_regret.back())
              << " avg_regret=" << fmt(r.cum_regret.back() / static_cast<double>(K)) << '\n';
    auto part = rows_from_allocation(r, c.method, s);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  write_rows(rows, out);
  return kOk;
}

// "gamma=5^-5..5^5" or "n=10,20".
void parse_grid_arg(const std::string& g, std::vector<double>& gammas, std::vector<int>& ns) {
  const auto eq = g.find('=');
  if (eq == std::string::npos) throw ConfigError("grid: expected name=values, got '" + g + "'");
  const std::string name = g.substr(0, eq);
  const std::vector<double> vals = parse_grid(g.substr(eq + 1));
  if (name == "gamma") {
    gammas = vals;
  } else if (name == "n") {
    ns.clear();
    for (double v : vals) {
      if (v < 1 || v != std::floor(v)) throw ConfigError("grid: n values must be positive integers");
      ns.push_back(static_cast<int>(v));
    }
  } else {
    throw ConfigError("grid: unknown axis '" + name + "'");
  }
}

int cmd_sweep(const std::string& config, const std::vector<std::uint64_t>& seeds,
              const std::vector<std::string>& grids, std::string out, bool tuned) {
  ExperimentConfig c = load_config(config);
  if (c.is_regret()) throw ConfigError("sweep: allocation methods have no stepsize");
  if (!seeds.empty()) c.seeds = seeds;
  std::vector<double> gammas = c.params.gamma_grid;
  std::vector<int> ns{c.n};
  for (const auto& g : grids) parse_grid_arg(g, gammas, ns);
  if (gammas.empty()) throw ConfigError("sweep: no stepsize grid, pass --grid gamma=... or params.gamma_grid");
  if (out.empty()) out = c.csv_path;

  const auto results = sweep(c, gammas, ns, sweep_threads());
  bool budget = false;
  std::vector<MetricRow> rows;
  // Tuned: per (n, seed) keep the stepsize that reaches the tolerance first.
  std::vector<const SweepResult*> keep;
  for (std::size_t i = 0; i < results.size();) {
    std::size_t j = i;
    const SweepResult* best = nullptr;
    for (; j < results.size() && results[j].cell.n == results[i].cell.n &&
           results[j].cell.seed == results[i].cell.seed;
         ++j) {
      const auto& r = results[j];
      budget = budget || r.budget_exceeded;
      std::cout << r.cell.key() << " stop=" << (r.budget_exceeded ? "budget" : r.record.stop_reason)
                << " k=" << r.record.k << " time=" << fmt(r.record.time)
                << " hit_time=" << (r.record.hit_time ? fmt(*r.record.hit_time) : "-") << '\n';
      if (!tuned) keep.push_back(&r);
      else if (r.record.hit_time && (!best || *r.record.hit_time < *best->record.hit_time)) best = &r;
    }
    if (tuned && best) {
      std::cout << "tuned n=" << best->cell.n << " seed=" << best->cell.seed
                << " gamma=" << fmt(best->cell.gamma) << " hit_time=" << fmt(*best->record.hit_time)
                << '\n';
      keep.push_back(best);
    }
    i = j;
  }
  for (const SweepResult* r : keep) {
    const std::string label = c.method + "|n=" + std::to_string(r->cell.n) + "|gamma=" + fmt(r->cell.gamma);
    auto part = rows_from_record(r->record, label);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  if (!rows.empty() && !out.empty()) write_rows(rows, out);
  return budget ? kBudget : kOk;
}

int cmd_verify(const std::string& suite, long trials, std::uint64_t seed) {
  bool ok = true;
  for (const auto& c : run_suite(suite, trials, seed)) {
    std::cout << (c.ok() ? "PASS " : "FAIL ") << c.name << ": " << c.passed << '/' << c.total
              << " matches\n";
    ok = ok && c.ok();
  }
  return ok ? kOk : kVerify;
}

bool ends_with(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

int cmd_export(const std::string& in, const std::string& out, std::string format) {
  std::ifstream f(in, std::ios::binary);
  if (!f) throw ConfigError("export: cannot open '" + in + "'");
  if (format.empty()) format = ends_with(out, ".jsonl") ? "jsonl" : "csv";
  std::ostringstream buf;
  if (ends_with(in, ".jsonl")) {
    const auto trace = read_jsonl(f);
    if (format == "jsonl") write_jsonl(buf, trace);
    else write_trace_csv(buf, trace);
  } else {
    const auto rows = read_csv(f);
    if (format == "jsonl") write_rows_jsonl(buf, rows);
    else write_csv(buf, rows);
  }
  if (out.empty() || out == "-") {
    std::cout << buf.str();
  } else {
    std::ofstream o(out, std::ios::binary);
    if (!(o << buf.str())) throw std::runtime_error("export: cannot write '" + out + "'");
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asgd_arena: virtual-clock simulator for asynchronous SGD and task allocation"};
  app.require_subcommand(1);

  std::string config, out, trace, suite = "all", in, format;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> grids;
  double gamma = 0.0;
  long trials = 0;
  std::uint64_t vseed = 0;
  bool tuned = false;

  auto* run = app.add_subcommand("run", "Execute one config");
  run->add_option("--config", config, "Config file")->required();
  run->add_option("--seed", seeds, "Seed(s), overriding the config");
  run->add_option("--out", out, "Metrics CSV (default: config output.csv, else stdout)");
  run->add_option("--trace", trace, "Event trace JSONL");
  run->add_option("--gamma", gamma, "Stepsize override");

  auto* sw = app.add_subcommand("sweep", "Cross seeds, stepsizes and worker counts");
  sw->add_option("--config", config, "Config file")->required();
  sw->add_option("--seed", seeds, "Seed(s), overriding the config");
  sw->add_option("--grid", grids, "Axis grid, e.g. gamma=5^-5..5^5 or n=10,20");
  sw->add_option("--out", out, "Metrics CSV");
  sw->add_flag("--tuned", tuned, "Keep only the best stepsize per seed");

  auto* rg = app.add_subcommand("regret", "Allocation-only experiment");
  rg->add_option("--config", config, "Config file")->required();
  rg->add_option("--seed", seeds, "Seed(s), overriding the config");
  rg->add_option("--out", out, "Metrics CSV");

  auto* vf = app.add_subcommand("verify", "Run the invariant suite");
  vf->add_option("--suite", suite, "all, ras, ringmaster, ringleader, malenia, sandwich, coverage, theory");
  vf->add_option("--trials", trials, "Instances per check (default: per check)");
  vf->add_option("--seed", vseed, "Seed");

  auto* ex = app.add_subcommand("export", "Re-serialize a metrics CSV or a trace JSONL");
  ex->add_option("--in", in, "Input file (.csv metrics or .jsonl trace)")->required();
  ex->add_option("--out", out, "Output file (default stdout)");
  ex->add_option("--format", format, "csv or jsonl (default from --out extension)")
      ->check(CLI::IsMember({"csv", "jsonl"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return fail("usage", e.what(), kConfig);
  }

  try {
    if (*run) return cmd_run(config, seeds, out, trace, gamma);
    if (*sw) return cmd_sweep(config, seeds, grids, out, tuned);
    if (*rg) return cmd_regret(config, seeds, out);
    if (*vf) return cmd_verify(suite, trials, vseed);
    if (*ex) return cmd_export(in, out, format);
  } catch (const ConfigError& e) {
    return fail("config", e.what(), kConfig);
  } catch (const BudgetExceeded& e) {
    return fail("budget", std::string(e.what()) + " at k=" + std::to_string(e.partial().k), kBudget);
  } catch (const std::invalid_argument& e) {
    return fail("config", e.what(), kConfig);
  } catch (const std::exception& e) {
    return fail("runtime", e.what(), 1);
  }
  return kOk;
}
