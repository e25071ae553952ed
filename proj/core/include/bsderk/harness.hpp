#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsderk/problems.hpp"
#include "bsderk/schemes.hpp"

namespace bsderk {

/// Everything a study needs; mirrored one-to-one by the JSON config file and
/// the CLI flags. Run r of every cell uses seed = seed + r.
struct ExperimentConfig {
  std::string problem = "bm-cos";
  std::vector<std::string> schemes = {"cn"};
  double theta = 0.5;
  double c2 = 0.5;
  double c3 = 1.0;
  std::vector<int> steps = {2, 4, 8, 16};
  int batch = 1000;
  int ntest = 10;
  std::optional<double> balance;
  std::vector<double> balances;
  std::string cn_variant = "control_variate";
  double initial_lr = 1e-2;
  std::optional<double> stop_lr;
  int check_interval = 50;
  double decay = 0.5;
  double decay_threshold = 0.05;
  int max_epochs = 20000;
  int width = 0;
  bool warm_start = true;
  std::uint64_t seed = 42;
  /// 0 reads BSDERK_WORKERS, defaulting to 1.
  int workers = 0;
  std::string out;
  bool save_models = false;

  void validate() const;
  nlohmann::json to_json() const;
  /// Unknown keys are rejected.
  static ExperimentConfig from_json(const nlohmann::json& j);
  SchemeOptions scheme_options() const;
  SolveOptions solve_options(std::uint64_t seed) const;
  int resolved_workers() const;
};

struct RunRecord {
  std::string scheme;
  int steps = 0;
  int run = 0;
  std::uint64_t seed = 0;
  double y0 = 0.0;
  bool ok = false;
  std::string message;
  double seconds = 0.0;
};

struct CellSummary {
  std::string scheme;
  int steps = 0;
  int runs = 0;
  int runs_ok = 0;
  double mean_y0 = 0.0;
  double sd_y0 = 0.0;
  std::optional<double> exact;
  /// |mean of Y0 over runs - exact Y0|.
  double epsilon = 0.0;
  /// sd_y0 / sqrt(runs_ok).
  double std_error = 0.0;
  bool complete = false;
};

struct StudyResult {
  std::vector<RunRecord> runs;
  std::vector<CellSummary> cells;
  std::map<std::string, double> orders;
  nlohmann::json summary;
};

/// Git-style SHA-1 of a blob with the given content.
std::string blob_hash(const std::string& content);

/// Aggregates runs into cells (in first-seen order).
std::vector<CellSummary> summarize_cells(const std::vector<RunRecord>& runs, std::optional<double> exact);

/// Weighted least-squares order of one scheme's cells: points with
/// epsilon below the run-to-run standard error are excluded, the others are
/// weighted by the inverse variance of log2 epsilon plus a 0.01 floor. NaN
/// when fewer than two cells remain.
double fit_order(const std::vector<CellSummary>& cells, const std::string& scheme);

/// One backward solve per (scheme, N, run). With a non-empty out directory
/// writes runs.csv, errors.csv, timing.csv and summary.json there. Failed
/// runs are recorded and their cells flagged incomplete. `problem` overrides
/// the named problem of the config.
StudyResult run_convergence_study(const ExperimentConfig& config, const BsdeProblem* problem = nullptr);

struct TimingRow {
  std::string scheme;
  int steps = 0;
  int runs = 0;
  double mean_seconds = 0.0;
  /// mean_seconds divided by that of the previous N of the scheme.
  double ratio = 0.0;
};

/// Wall time per (scheme, N); writes timing_study.csv.
std::vector<TimingRow> run_timing_study(const ExperimentConfig& config, const BsdeProblem* problem = nullptr);

struct BalanceRow {
  double balance = 0.0;
  CellSummary cell;
};

/// CN study per balance number; writes balance.csv.
std::vector<BalanceRow> run_balance_sweep(const ExperimentConfig& config, const std::vector<double>& balances,
                                          const BsdeProblem* problem = nullptr);

}  // namespace bsderk
