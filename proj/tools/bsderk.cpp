// bsderk: convergence studies, timing, balance sweeps, the quadrature oracle
// and plotting from the command line.
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <json.hpp>

#include "bsderk/errors.hpp"
#include "bsderk/harness.hpp"
#include "bsderk/oracle.hpp"
#include "bsderk/plots.hpp"
#include "bsderk/problems.hpp"
#include "bsderk/schemes.hpp"

namespace {

using bsderk::ExperimentConfig;

// Flags are applied on top of an optional JSON config, so only the options
// actually given on the command line override it.
struct StudyFlags {
  std::string config_file;
  ExperimentConfig c;
  double balance = 0.0;
  double stop_lr = 0.0;
  bool cold_start = false;
  std::vector<std::function<void(ExperimentConfig&)>> apply;

  template <class T>
  void add(CLI::App* app, const std::string& name, T& field, T ExperimentConfig::*member, const std::string& help) {
    CLI::Option* opt = app->add_option(name, field, help);
    if constexpr (std::is_same_v<T, std::vector<std::string>> || std::is_same_v<T, std::vector<int>> ||
                  std::is_same_v<T, std::vector<double>>) {
      opt->delimiter(',');
    }
    apply.push_back([opt, &field, member](ExperimentConfig& cfg) {
      if (opt->count() > 0) cfg.*member = field;
    });
  }

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "JSON config file; flags override its entries")->check(CLI::ExistingFile);
    add(app, "--problem", c.problem, &ExperimentConfig::problem, "bm-cos, cir-cos or linear-1d");
    add(app, "--scheme,--schemes", c.schemes, &ExperimentConfig::schemes,
        "comma separated: euler-implicit, euler-explicit, theta, cn, rk2, rk3");
    add(app, "--theta", c.theta, &ExperimentConfig::theta, "theta of the theta scheme");
    add(app, "--c2", c.c2, &ExperimentConfig::c2, "c2 of rk2/rk3");
    add(app, "--c3", c.c3, &ExperimentConfig::c3, "c3 of rk3");
    add(app, "--steps", c.steps, &ExperimentConfig::steps, "comma separated N values");
    add(app, "--batch", c.batch, &ExperimentConfig::batch, "minibatch size b");
    add(app, "--ntest", c.ntest, &ExperimentConfig::ntest, "runs per cell");
    add(app, "--cn-variant", c.cn_variant, &ExperimentConfig::cn_variant, "control_variate or plain");
    add(app, "--lr", c.initial_lr, &ExperimentConfig::initial_lr, "initial learning rate");
    add(app, "--check-interval", c.check_interval, &ExperimentConfig::check_interval, "epochs between test checks");
    add(app, "--decay", c.decay, &ExperimentConfig::decay, "learning rate decay factor");
    add(app, "--decay-threshold", c.decay_threshold, &ExperimentConfig::decay_threshold,
        "relative improvement below which the rate decays");
    add(app, "--max-epochs", c.max_epochs, &ExperimentConfig::max_epochs, "epoch cap per stage");
    add(app, "--width", c.width, &ExperimentConfig::width, "hidden width, 0 for d + 10");
    add(app, "--seed", c.seed, &ExperimentConfig::seed, "seed base; run r uses seed + r");
    add(app, "--workers", c.workers, &ExperimentConfig::workers, "worker threads, 0 reads BSDERK_WORKERS");
    add(app, "--out", c.out, &ExperimentConfig::out, "output directory");
    add(app, "--balances", c.balances, &ExperimentConfig::balances, "balance numbers for the sweep");
    CLI::Option* b = app->add_option("--balance", balance, "balance number at every A-head stage");
    CLI::Option* s = app->add_option("--stop-lr", stop_lr, "learning rate at which training stops");
    CLI::Option* cold = app->add_flag("--cold-start", cold_start, "initialize every stage network afresh");
    CLI::Option* save = app->add_flag("--save-models", c.save_models, "write the trained networks under out/models");
    apply.push_back([b, s, cold, save, this](ExperimentConfig& cfg) {
      if (b->count() > 0) cfg.balance = balance;
      if (s->count() > 0) cfg.stop_lr = stop_lr;
      if (cold->count() > 0) cfg.warm_start = false;
      if (save->count() > 0) cfg.save_models = true;
    });
  }

  ExperimentConfig resolve() const {
    ExperimentConfig cfg;
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        throw bsderk::InvalidParameter(config_file + ": " + e.what());
      }
      cfg = ExperimentConfig::from_json(j);
    }
    for (const auto& f : apply) f(cfg);
    return cfg;
  }
};

void print_cells(const std::vector<bsderk::CellSummary>& cells) {
  std::printf("%-16s %4s %6s %14s %12s %12s\n", "scheme", "N", "runs", "mean_y0", "epsilon", "std_error");
  for (const auto& c : cells) {
    std::printf("%-16s %4d %3d/%-2d %14.8f %12.4e %12.4e%s\n", c.scheme.c_str(), c.steps, c.runs_ok, c.runs, c.mean_y0,
                c.epsilon, c.std_error, c.complete ? "" : "  incomplete");
  }
}

std::unique_ptr<bsderk::BsdeProblem> oracle_problem(const std::string& name) {
  if (name == "bm-cos-1d") return std::make_unique<bsderk::BmCosProblem>(1, 1.0, 10.0);
  auto p = bsderk::make_problem(name);
  if (p->dim() != 1) throw bsderk::InvalidParameter("the oracle needs a one-dimensional problem");
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep Runge-Kutta BSDE solver"};
  app.require_subcommand(1);

  StudyFlags study_flags, timing_flags, balance_flags;
  CLI::App* study = app.add_subcommand("study", "convergence study over N with ntest runs per cell");
  study_flags.attach(study);
  CLI::App* timing = app.add_subcommand("timing", "wall time per (scheme, N)");
  timing_flags.attach(timing);
  CLI::App* balance = app.add_subcommand("balance", "CN error against the balance number");
  balance_flags.attach(balance);

  std::string oracle_name = "bm-cos-1d";
  std::vector<std::string> oracle_schemes = {"euler-implicit", "euler-explicit", "cn", "rk2", "rk3"};
  std::vector<int> oracle_steps = {4, 8, 16, 32, 64};
  std::string oracle_out;
  bsderk::SchemeOptions oracle_options;
  bsderk::OracleConfig oracle_config;
  CLI::App* oracle = app.add_subcommand("oracle", "deterministic quadrature solve, CSV of errors and running slopes");
  oracle->add_option("--problem", oracle_name, "bm-cos-1d or a registered 1-d problem");
  oracle->add_option("--scheme,--schemes", oracle_schemes, "comma separated scheme names")->delimiter(',');
  oracle->add_option("--steps", oracle_steps, "comma separated N values")->delimiter(',');
  oracle->add_option("--theta", oracle_options.theta, "theta of the theta scheme");
  oracle->add_option("--c2", oracle_options.c2, "c2 of rk2/rk3");
  oracle->add_option("--c3", oracle_options.c3, "c3 of rk3");
  oracle->add_option("--nodes", oracle_config.nodes, "spatial nodes");
  oracle->add_option("--gh-order", oracle_config.gh_order, "Gauss-Hermite order");
  oracle->add_option("--width-sd", oracle_config.width_sd, "half width of the grid in standard deviations");
  oracle->add_option("--out", oracle_out, "CSV file, stdout when omitted");

  std::string plot_errors, plot_timing, plot_balance, plot_out = ".";
  CLI::App* plot = app.add_subcommand("plot", "SVG charts from study CSVs");
  plot->add_option("--errors", plot_errors, "errors.csv of a study");
  plot->add_option("--timing", plot_timing, "timing.csv of a study");
  plot->add_option("--balance", plot_balance, "balance.csv of a sweep");
  plot->add_option("--out", plot_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (study->parsed()) {
      const ExperimentConfig cfg = study_flags.resolve();
      const auto result = bsderk::run_convergence_study(cfg);
      print_cells(result.cells);
      for (const auto& [scheme, order] : result.orders) std::printf("order %-16s %.3f\n", scheme.c_str(), order);
    } else if (timing->parsed()) {
      const auto rows = bsderk::run_timing_study(timing_flags.resolve());
      std::printf("%-16s %4s %12s %8s\n", "scheme", "N", "seconds", "ratio");
      for (const auto& r : rows) std::printf("%-16s %4d %12.3f %8.3f\n", r.scheme.c_str(), r.steps, r.mean_seconds, r.ratio);
    } else if (balance->parsed()) {
      const ExperimentConfig cfg = balance_flags.resolve();
      std::vector<double> values = cfg.balances;
      if (values.empty()) values = {0.5, 1.0, 4.0 / 3.0, 2.0, 4.0, 8.0, 16.0, 32.0};
      const auto rows = bsderk::run_balance_sweep(cfg, values);
      std::printf("%10s %4s %14s %12s\n", "balance", "N", "mean_y0", "epsilon");
      for (const auto& r : rows) {
        std::printf("%10.4f %4d %14.8f %12.4e\n", r.balance, r.cell.steps, r.cell.mean_y0, r.cell.epsilon);
      }
    } else if (oracle->parsed()) {
      const auto problem = oracle_problem(oracle_name);
      std::vector<bsderk::OrderResult> results;
      for (const auto& s : oracle_schemes) {
        const auto spec = bsderk::make_scheme(s, oracle_options);
        results.push_back(bsderk::empirical_order(*problem, spec.tableau, oracle_steps, oracle_config, 1e-11, s));
      }
      if (oracle_out.empty()) {
        bsderk::write_order_csv(std::cout, results);
      } else {
        std::ofstream out(oracle_out);
        bsderk::write_order_csv(out, results);
      }
      for (const auto& r : results) std::fprintf(stderr, "order %-16s %.3f\n", r.scheme.c_str(), r.slope);
    } else if (plot->parsed()) {
      for (const auto& f : bsderk::emit_plots(plot_errors, plot_timing, plot_balance, plot_out)) {
        std::printf("%s\n", f.c_str());
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "bsderk: %s\n", e.what());
    return 1;
  }
  return 0;
}
