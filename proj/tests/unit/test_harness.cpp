#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "bsderk/csv.hpp"
#include "bsderk/errors.hpp"
#include "bsderk/harness.hpp"
#include "bsderk/plots.hpp"
#include "support.hpp"

using namespace bsderk;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("bsderk_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.schemes = {"euler-explicit"};
  c.steps = {1, 2};
  c.ntest = 2;
  c.batch = 64;
  c.max_epochs = 100;
  c.stop_lr = 1e-3;
  c.seed = 5;
  c.workers = 1;
  return c;
}

LinearProblem tiny_problem() {
  LinearParams lp;
  lp.mu = 0.2;
  lp.sigma = 0.5;
  lp.x0 = 1.0;
  return LinearProblem(lp);
}

RunRecord record(const std::string& scheme, int N, int run, double y0, bool ok = true) {
  RunRecord r;
  r.scheme = scheme;
  r.steps = N;
  r.run = run;
  r.y0 = y0;
  r.ok = ok;
  return r;
}

}  // namespace

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c;
  c.schemes = {"cn", "rk3"};
  c.c2 = 0.3;
  c.balance = 2.0;
  c.stop_lr = 1e-7;
  c.steps = {3, 6};
  const auto back = ExperimentConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.schemes, c.schemes);
  EXPECT_EQ(*back.balance, 2.0);
}

TEST(Config, RejectsUnknownKeys) {
  nlohmann::json j = ExperimentConfig{}.to_json();
  j["learning_rate"] = 0.1;
  EXPECT_THROW(ExperimentConfig::from_json(j), InvalidParameter);
}

TEST(Config, Validation) {
  ExperimentConfig c;
  EXPECT_NO_THROW(c.validate());
  c.steps = {};
  EXPECT_THROW(c.validate(), InvalidParameter);
  c = ExperimentConfig{};
  c.ntest = 0;
  EXPECT_THROW(c.validate(), InvalidParameter);
  c = ExperimentConfig{};
  c.cn_variant = "both";
  EXPECT_THROW(c.validate(), InvalidParameter);
  c = ExperimentConfig{};
  c.schemes = {"heun"};
  EXPECT_THROW(c.validate(), InvalidParameter);
}

TEST(BlobHash, MatchesGit) {
  EXPECT_EQ(blob_hash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(blob_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST(Summaries, CellStatistics) {
  const std::vector<RunRecord> runs = {record("cn", 2, 0, 1.0), record("cn", 2, 1, 3.0), record("ei", 2, 0, 0.0, false),
                                       record("cn", 4, 0, 2.5)};
  const auto cells = summarize_cells(runs, 2.0);
  ASSERT_EQ(cells.size(), 3u);
  EXPECT_EQ(cells[0].scheme, "cn");
  EXPECT_EQ(cells[0].steps, 2);
  EXPECT_DOUBLE_EQ(cells[0].mean_y0, 2.0);
  EXPECT_DOUBLE_EQ(cells[0].sd_y0, std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(cells[0].std_error, 1.0);
  EXPECT_DOUBLE_EQ(cells[0].epsilon, 0.0);
  EXPECT_TRUE(cells[0].complete);
  EXPECT_EQ(cells[1].scheme, "ei");
  EXPECT_FALSE(cells[1].complete);
  EXPECT_TRUE(std::isnan(cells[1].mean_y0));
  EXPECT_EQ(cells[2].sd_y0, 0.0);
  EXPECT_DOUBLE_EQ(cells[2].epsilon, 0.5);
}

TEST(Summaries, FitOrderRecoversSlope) {
  std::vector<CellSummary> cells;
  for (int N : {2, 4, 8, 16}) {
    CellSummary c;
    c.scheme = "cn";
    c.steps = N;
    c.epsilon = 3.0 / (N * N);
    c.std_error = 1e-6;
    c.runs_ok = c.runs = 4;
    c.complete = true;
    cells.push_back(c);
  }
  EXPECT_NEAR(fit_order(cells, "cn"), 2.0, 1e-10);
  EXPECT_TRUE(std::isnan(fit_order(cells, "rk2")));
  cells[3].std_error = 1.0;  // epsilon below its standard error
  cells[2].std_error = 1.0;
  cells[1].std_error = 1.0;
  EXPECT_TRUE(std::isnan(fit_order(cells, "cn")));
}

TEST(Study, WritesArtifacts) {
  const auto dir = fresh_dir("study");
  auto c = tiny_config();
  c.out = dir.string();
  const auto p = tiny_problem();
  const auto r = run_convergence_study(c, &p);
  ASSERT_EQ(r.runs.size(), 4u);
  ASSERT_EQ(r.cells.size(), 2u);
  for (const auto& cell : r.cells) {
    EXPECT_TRUE(cell.complete);
    EXPECT_NEAR(cell.mean_y0, 1.2, 0.1);
  }
  for (const char* f : {"runs.csv", "errors.csv", "timing.csv", "summary.json"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  const auto errors = read_csv((dir / "errors.csv").string());
  EXPECT_EQ(errors.rows.size(), 2u);
  EXPECT_NO_THROW(errors.column("epsilon"));
  const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  EXPECT_EQ(summary.at("input_hash"), blob_hash(c.to_json().dump()));
  EXPECT_TRUE(summary.at("incomplete").empty());
}

TEST(Study, FailedRunsMarkCellIncomplete) {
  auto c = tiny_config();
  c.steps = {2};
  const auto p = bsderk::testing::nan_driver_problem(1);
  const auto r = run_convergence_study(c, p.get());
  ASSERT_EQ(r.cells.size(), 1u);
  EXPECT_FALSE(r.cells[0].complete);
  EXPECT_EQ(r.cells[0].runs_ok, 0);
  for (const auto& run : r.runs) {
    EXPECT_FALSE(run.ok);
    EXPECT_FALSE(run.message.empty());
  }
}

TEST(Study, DeterministicAcrossWorkerCounts) {
  auto c = tiny_config();
  const auto p = tiny_problem();
  const auto a = run_convergence_study(c, &p);
  c.workers = 2;
  const auto b = run_convergence_study(c, &p);
  ASSERT_EQ(a.runs.size(), b.runs.size());
  for (std::size_t i = 0; i < a.runs.size(); ++i) {
    EXPECT_EQ(a.runs[i].y0, b.runs[i].y0);
    EXPECT_EQ(a.runs[i].seed, b.runs[i].seed);
  }
}

TEST(Timing, RejectsEmptyStepList) {
  auto c = tiny_config();
  c.steps = {};
  const auto p = tiny_problem();
  EXPECT_THROW(run_timing_study(c, &p), InvalidParameter);
}

TEST(Timing, RatiosArePerScheme) {
  const auto dir = fresh_dir("timing");
  auto c = tiny_config();
  c.ntest = 1;
  c.out = dir.string();
  const auto p = tiny_problem();
  const auto rows = run_timing_study(c, &p);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_GT(rows[1].mean_seconds, 0.0);
  EXPECT_NEAR(rows[1].ratio, rows[1].mean_seconds / rows[0].mean_seconds, 1e-12);
  EXPECT_TRUE(fs::exists(dir / "timing_study.csv"));
}

TEST(Balance, RejectsOtherSchemesAndBadBalances) {
  auto c = tiny_config();
  const auto p = tiny_problem();
  EXPECT_THROW(run_balance_sweep(c, {1.0}, &p), InvalidParameter);
  c.schemes = {"cn"};
  EXPECT_THROW(run_balance_sweep(c, {}, &p), InvalidParameter);
  EXPECT_THROW(run_balance_sweep(c, {-1.0}, &p), InvalidParameter);
}

TEST(Balance, SweepWritesOneRowPerBalance) {
  const auto dir = fresh_dir("balance");
  auto c = tiny_config();
  c.schemes = {"cn"};
  c.steps = {2};
  c.ntest = 1;
  c.out = dir.string();
  const auto p = tiny_problem();
  const auto rows = run_balance_sweep(c, {0.5, 2.0}, &p);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].balance, 0.5);
  EXPECT_EQ(read_csv((dir / "balance.csv").string()).rows.size(), 2u);
}

TEST(Plots, ErrorChartHasOnePolylinePerScheme) {
  const auto dir = fresh_dir("plots");
  std::ofstream(dir / "errors.csv") << "scheme,N,runs,runs_ok,mean_y0,sd_y0,exact_y0,epsilon,std_error,complete\n"
                                       "cn,2,2,2,1,0,1,0.1,0.01,true\n"
                                       "cn,4,2,2,1,0,1,0.025,0.01,true\n"
                                       "euler-implicit,2,2,2,1,0,1,0.2,0.01,true\n"
                                       "euler-implicit,4,2,2,1,0,1,0.1,0.01,true\n";
  const auto files = emit_plots((dir / "errors.csv").string(), "", "", dir.string());
  ASSERT_EQ(files.size(), 1u);
  const std::string svg = slurp(files[0]);
  std::size_t lines = 0;
  for (std::size_t at = svg.find("<polyline"); at != std::string::npos; at = svg.find("<polyline", at + 1)) ++lines;
  EXPECT_EQ(lines, 2u);
  EXPECT_NE(svg.find("euler-implicit"), std::string::npos);
  EXPECT_NE(svg.find("cn"), std::string::npos);
}

TEST(Plots, EmptySeriesIsRejectedWithoutFile) {
  const auto dir = fresh_dir("plots_empty");
  const auto file = dir / "x.svg";
  EXPECT_THROW(write_loglog_svg({Series{"a", {}, {}}}, "t", "x", "y", file.string()), InvalidParameter);
  EXPECT_FALSE(fs::exists(file));
}

TEST(Plots, MalformedCsvReportsLine) {
  try {
    parse_csv("scheme,N,epsilon\ncn,2,0.1\ncn,4\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  const auto t = parse_csv("scheme,N,epsilon\ncn,2,abc\n");
  try {
    t.number(0, 2);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}
