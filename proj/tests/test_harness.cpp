#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "asgd/harness/config.hpp"
#include "asgd/harness/io.hpp"
#include "asgd/harness/runner.hpp"
#include "asgd/harness/verify.hpp"

using namespace asgd;
using namespace asgd::harness;
namespace fs = std::filesystem;

namespace {

const std::string kFix = ASGD_FIXTURES;

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

struct Cli {
  int code;
  std::string out, err;
};

class Scratch : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("asgd_harness_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Cli cli(const std::string& args) {
    const fs::path o = dir_ / "stdout.txt", e = dir_ / "stderr.txt";
    const std::string cmd = std::string(ASGD_ARENA_BIN) + " " + args + " >" + o.string() + " 2>" + e.string();
    const int st = std::system(cmd.c_str());
    return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, slurp(o), slurp(e)};
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST(Config, ParsesAllSections) {
  const auto c = parse(R"(method = rennala
n = 3
seeds = 4, 5
[problem]
kind = hetero_quad
d = 12
sigma = 0.5
[model]
dists = exp:2, shifted_exp:1:3, uniform:1:2@0.5
[params]
gamma_grid = 5^-2..5^1
B = 7
lcb = eta
[stop]
max_time = 100
[output]
csv = out.csv
)");
  EXPECT_EQ(c.method, "rennala");
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{4, 5}));
  EXPECT_EQ(c.problem.kind, "hetero_quad");
  EXPECT_EQ(c.problem.d, 12);
  ASSERT_EQ(c.model.dists.size(), 3u);
  EXPECT_DOUBLE_EQ(c.model.dists[1].mean(), 4.0);
  EXPECT_DOUBLE_EQ(c.model.dists[2].mean(), 2.0);
  ASSERT_EQ(c.params.gamma_grid.size(), 4u);
  EXPECT_DOUBLE_EQ(c.params.gamma_grid[0], 0.04);
  EXPECT_DOUBLE_EQ(c.params.gamma_grid[3], 5.0);
  EXPECT_EQ(c.params.B, 7);
  EXPECT_EQ(c.stop.max_time, 100.0);
  EXPECT_EQ(c.csv_path, "out.csv");
}

TEST(Config, Rejections) {
  const std::string ok = "method = ringmaster\nn = 2\n[model]\ntaus = 1, 2\n[stop]\nmax_k = 5\n";
  EXPECT_NO_THROW(parse(ok));
  EXPECT_THROW(parse(ok + "[params]\ngama = 1\n"), ConfigError);
  EXPECT_THROW(parse(ok + "[extra]\nx = 1\n"), ConfigError);
  EXPECT_THROW(parse("method = warp\nn = 2\n[model]\ntaus = 1, 2\n[stop]\nmax_k = 5\n"), ConfigError);
  EXPECT_THROW(parse("method = ringmaster\nn = 3\n[model]\ntaus = 1, 2\n[stop]\nmax_k = 5\n"), ConfigError);
  EXPECT_THROW(parse("method = ringmaster\nn = 2\n[model]\ntaus = 1, 2\n"), ConfigError);
  EXPECT_THROW(parse("method = ringmaster\nn = 2\n[model]\ntaus = 1, x\n[stop]\nmax_k = 5\n"), ConfigError);
  EXPECT_THROW(parse("method = ringmaster\nn = 2\n[model]\ntaus = 1, 2\npreset = fixed_linear_jitter\n[stop]\nmax_k = 5\n"),
               ConfigError);
  EXPECT_THROW(parse("method = ata\nn = 2\n[model]\ntaus = 1, 2\n[stop]\nrounds = 5\n"), ConfigError);
  EXPECT_THROW(parse("method = ata\nn = 1\n[model]\ndists = exp:0\n[stop]\nrounds = 5\n"), ConfigError);
  EXPECT_THROW(parse("method = ata\nn = 1\n[model]\ndists = weibull:1\n[stop]\nrounds = 5\n"), ConfigError);
  EXPECT_THROW(parse(ok + "[params]\ngamma_grid = 5^3..5^1\n"), ConfigError);
  EXPECT_THROW(load_config(kFix + "/missing.ini"), ConfigError);
}

TEST(Config, RegretAlphaNeedsFiniteNorm) {
  const auto c = parse("method = ata\nn = 2\n[model]\ndists = exp:1, lognormal:0:1\n[stop]\nrounds = 5\n");
  EXPECT_THROW(run_regret(c, 1), ConfigError);
  const auto e = parse("method = ata_empirical\nn = 2\n[model]\ndists = exp:1, lognormal:0:1\n[stop]\nrounds = 5\n");
  EXPECT_EQ(run_regret(e, 1).cum_regret.size(), 5u);
}

TEST(Csv, HeaderMatchesGolden) {
  std::ostringstream s;
  write_csv(s, {});
  EXPECT_EQ(s.str(), slurp(kFix + "/header.golden"));
}

TEST(Csv, SingleRowRoundTrip) {
  const std::string text = slurp(kFix + "/one_row.csv");
  std::istringstream in(text);
  const auto rows = read_csv(in);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].method, "ringmaster");
  EXPECT_EQ(rows[0].discarded, 2);
  EXPECT_FALSE(rows[0].cum_regret.has_value());
  std::ostringstream out;
  write_csv(out, rows);
  EXPECT_EQ(out.str(), text);
}

TEST(Csv, RejectsBadInput) {
  std::istringstream wrong("method,seed\n");
  EXPECT_THROW(read_csv(wrong), std::runtime_error);
  std::istringstream short_row(std::string(kCsvHeader) + "\na,1,2\n");
  EXPECT_THROW(read_csv(short_row), std::runtime_error);
  MetricRow r;
  r.method = "a,b";
  std::ostringstream s;
  EXPECT_THROW(write_csv(s, {r}), std::invalid_argument);
}

TEST(Csv, RowsFromRecord) {
  const auto c = load_config(kFix + "/ringleader_small.ini");
  const RunRecord rec = run_one(c, 1);
  const auto rows = rows_from_record(rec);
  ASSERT_GE(rows.size(), 2u);
  EXPECT_EQ(rows.front().k, 0);
  EXPECT_EQ(rows.back().k, rec.k);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LT(rows[i - 1].k, rows[i].k);
  for (const auto& r : rows) {
    EXPECT_FALSE(r.cum_regret.has_value());
    EXPECT_TRUE(r.grad_norm_sq.has_value());
  }
}

TEST(Csv, AllocationRowsAreDownsampled) {
  AllocRunResult r;
  for (int i = 0; i < 10000; ++i) {
    r.costs.push_back(1.0);
    r.cum_regret.push_back(0.5 * i);
  }
  const auto rows = rows_from_allocation(r, "ata", 1);
  EXPECT_EQ(rows.front().k, 1);
  EXPECT_EQ(rows.back().k, 10000);
  EXPECT_LE(rows.size(), 2002u);
  EXPECT_DOUBLE_EQ(*rows.back().vtime, 10000.0);
}

TEST(Jsonl, TraceRoundTrip) {
  const auto c = load_config(kFix + "/ringmaster_small.ini");
  const RunRecord rec = run_one(c, 7, {.trace = true});
  ASSERT_FALSE(rec.trace.empty());
  std::ostringstream a;
  write_jsonl(a, rec.trace);
  std::istringstream in(a.str());
  const auto back = read_jsonl(in);
  ASSERT_EQ(back.size(), rec.trace.size());
  std::ostringstream b;
  write_jsonl(b, back);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(parse_action("discarded"), Action::discarded);
}

TEST(Runner, PureFunctionOfConfigAndSeed) {
  const auto c = load_config(kFix + "/ringmaster_small.ini");
  const RunRecord a = run_one(c, 7), b = run_one(c, 7), d = run_one(c, 8);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.time, b.time);
  EXPECT_NE(a.time, d.time);
}

TEST(Runner, SweepCellsMatchIsolatedRuns) {
  const auto c = load_config(kFix + "/ringleader_small.ini");
  const std::vector<double> gammas{0.2, 0.05};
  const auto res = sweep(c, gammas, {3}, 2);
  ASSERT_EQ(res.size(), c.seeds.size() * gammas.size());
  for (std::size_t i = 1; i < res.size(); ++i) EXPECT_LT(res[i - 1].cell.key(), res[i].cell.key());
  for (const auto& r : res) {
    const RunRecord iso = run_one(c, r.cell.seed, {.gamma = r.cell.gamma});
    EXPECT_EQ(iso.x, r.record.x) << r.cell.key();
    EXPECT_EQ(iso.time, r.record.time) << r.cell.key();
  }
}

TEST(Runner, BudgetExceededSurfaces) {
  const auto c = load_config(kFix + "/tiny_budget.ini");
  EXPECT_THROW(run_one(c, 1), BudgetExceeded);
}

TEST(Verify, RasSuiteReportsAllMatches) {
  const auto checks = run_suite("ras", 200, 1);
  ASSERT_FALSE(checks.empty());
  for (const auto& c : checks) {
    EXPECT_TRUE(c.ok()) << c.name;
    EXPECT_EQ(c.passed, c.total);
  }
  EXPECT_THROW(run_suite("nope", 1, 1), std::invalid_argument);
}

TEST_F(Scratch, CliRunIsByteIdentical) {
  const std::string cfg = kFix + "/ringmaster_small.ini";
  const Cli a = cli("run --config " + cfg + " --seed 7 --out " + path("a.csv") + " --trace " + path("a.jsonl"));
  const Cli b = cli("run --config " + cfg + " --seed 7 --out " + path("b.csv") + " --trace " + path("b.jsonl"));
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_FALSE(slurp(path("a.csv")).empty());
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  EXPECT_FALSE(slurp(path("a.jsonl")).empty());
  EXPECT_EQ(slurp(path("a.jsonl")), slurp(path("b.jsonl")));
  EXPECT_EQ(slurp(path("a.csv")).rfind(slurp(kFix + "/header.golden"), 0), 0u);
}

TEST_F(Scratch, CliRunToStdout) {
  const Cli r = cli("run --config " + kFix + "/ringleader_small.ini");
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  const auto rows = read_csv(in);
  EXPECT_EQ(rows.front().seed, 1u);
  EXPECT_EQ(rows.back().seed, 2u);
}

TEST_F(Scratch, CliExitCodes) {
  const Cli bad = cli("run --config " + kFix + "/bad_key.ini");
  EXPECT_EQ(bad.code, 2);
  const auto j = nlohmann::json::parse(bad.err.substr(0, bad.err.find('\n')));
  EXPECT_EQ(j["error"], "config");
  EXPECT_NE(j["message"].get<std::string>().find("params.gama"), std::string::npos);

  EXPECT_EQ(cli("run --config " + kFix + "/tiny_budget.ini").code, 3);
  EXPECT_EQ(cli("run --config " + kFix + "/nope.ini").code, 2);
  EXPECT_NE(cli("").code, 0);
  EXPECT_NE(cli("frobnicate").code, 0);
}

TEST_F(Scratch, CliVerifyRas) {
  const Cli r = cli("verify --suite ras --trials 500");
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("500/500 matches"), std::string::npos) << r.out;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST_F(Scratch, CliSweepTuned) {
  const Cli r = cli("sweep --config " + kFix + "/ringmaster_small.ini --grid gamma=5^-2..5^0 --tuned --out " +
                    path("s.csv"));
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("gamma=0.04"), std::string::npos);
  EXPECT_NE(r.out.find("gamma=1"), std::string::npos);
  EXPECT_EQ(cli("sweep --config " + kFix + "/ringmaster_small.ini --grid bogus=1").code, 2);
}

TEST_F(Scratch, CliRegretAndExport) {
  const Cli r = cli("regret --config " + kFix + "/regret_small.ini --out " + path("r.csv"));
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream f(path("r.csv"));
  const auto rows = read_csv(f);
  ASSERT_EQ(rows.back().k, 300);
  EXPECT_TRUE(rows.back().cum_regret.has_value());
  EXPECT_GE(*rows.back().cum_regret, 0.0);

  const Cli e = cli("export --in " + kFix + "/one_row.csv --out " + path("x.csv"));
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(slurp(path("x.csv")), slurp(kFix + "/one_row.csv"));
  const Cli ej = cli("export --in " + kFix + "/one_row.csv --format jsonl");
  ASSERT_EQ(ej.code, 0) << ej.err;
  const auto j = nlohmann::json::parse(ej.out);
  EXPECT_EQ(j["k"], 12);
  EXPECT_TRUE(j["cum_regret"].is_null());

  ASSERT_EQ(cli("run --config " + kFix + "/ringmaster_small.ini --out " + path("m.csv") + " --trace " +
                path("t.jsonl")).code,
            0);
  ASSERT_EQ(cli("export --in " + path("t.jsonl") + " --out " + path("t2.jsonl")).code, 0);
  EXPECT_EQ(slurp(path("t.jsonl")), slurp(path("t2.jsonl")));
  EXPECT_EQ(cli("export --in " + path("absent.csv")).code, 2);
}
