#include "bsderk/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include "bsderk/errors.hpp"

namespace bsderk {

namespace {

namespace fs = std::filesystem;

const std::vector<std::string> kConfigKeys = {
    "problem",    "schemes",    "theta",     "c2",          "c3",         "steps",        "batch",
    "ntest",      "balance",    "balances",  "cn_variant",  "initial_lr", "stop_lr",      "check_interval",
    "decay",      "decay_threshold", "max_epochs", "width", "warm_start", "seed",         "workers",
    "out",        "save_models"};

std::unique_ptr<BsdeProblem> owned_problem(const ExperimentConfig& config, const BsdeProblem* problem) {
  if (problem) return nullptr;
  return make_problem(config.problem);
}

// Runs fn(i) for i in [0, count) on `workers` threads; results are placed by
// index so the merge order never depends on scheduling.
template <class F>
void parallel_for(std::size_t count, int workers, F&& fn) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

RunRecord run_one(const BsdeProblem& problem, const ExperimentConfig& config, const std::string& scheme, int steps,
                  int run) {
  RunRecord r;
  r.scheme = scheme;
  r.steps = steps;
  r.run = run;
  r.seed = config.seed + static_cast<std::uint64_t>(run);
  const auto start = std::chrono::steady_clock::now();
  try {
    const SchemeSpec spec = make_scheme(scheme, config.scheme_options());
    const TimeGrid grid(problem.horizon(), steps, spec.tableau.abscissae());
    const SolvedBsde solved = backward_solve(problem, spec, grid, config.solve_options(r.seed));
    r.y0 = solved.y0();
    r.ok = true;
    if (config.save_models && !config.out.empty()) {
      solved.save((fs::path(config.out) / "models" /
                   (scheme + "_N" + std::to_string(steps) + "_run" + std::to_string(run)))
                      .string());
    }
  } catch (const std::exception& e) {
    r.ok = false;
    r.message = e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::vector<RunRecord> run_all(const BsdeProblem& problem, const ExperimentConfig& config) {
  struct Task {
    std::string scheme;
    int steps;
    int run;
  };
  std::vector<Task> tasks;
  for (const auto& s : config.schemes) {
    for (int n : config.steps) {
      for (int r = 0; r < config.ntest; ++r) tasks.push_back({s, n, r});
    }
  }
  std::vector<RunRecord> records(tasks.size());
  parallel_for(tasks.size(), config.resolved_workers(), [&](std::size_t i) {
    records[i] = run_one(problem, config, tasks[i].scheme, tasks[i].steps, tasks[i].run);
  });
  return records;
}

std::string clean(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return s;
}

void write_cells(std::ostream& out, const std::vector<CellSummary>& cells) {
  out << "scheme,N,runs,runs_ok,mean_y0,sd_y0,exact_y0,epsilon,std_error,complete\n" << std::setprecision(17);
  for (const auto& c : cells) {
    out << c.scheme << ',' << c.steps << ',' << c.runs << ',' << c.runs_ok << ',' << c.mean_y0 << ',' << c.sd_y0
        << ',';
    if (c.exact) out << *c.exact;
    out << ',' << c.epsilon << ',' << c.std_error << ',' << (c.complete ? 1 : 0) << '\n';
  }
}

nlohmann::json cell_json(const CellSummary& c) {
  nlohmann::json j = {{"scheme", c.scheme},     {"N", c.steps},         {"runs", c.runs},
                      {"runs_ok", c.runs_ok},   {"mean_y0", c.mean_y0}, {"sd_y0", c.sd_y0},
                      {"epsilon", c.epsilon},   {"std_error", c.std_error}, {"complete", c.complete}};
  if (c.exact) j["exact_y0"] = *c.exact;
  return j;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (schemes.empty()) throw InvalidParameter("no schemes given");
  for (const auto& s : schemes) make_scheme(s, scheme_options());
  if (steps.empty()) throw InvalidParameter("empty list of step counts");
  for (int n : steps) {
    if (n < 1) throw InvalidParameter("step counts must be at least 1");
  }
  if (ntest < 1) throw InvalidParameter("ntest must be at least 1");
  if (batch < 1) throw InvalidParameter("batch size must be at least 1");
  if (cn_variant != "control_variate" && cn_variant != "plain") {
    throw InvalidParameter("cn_variant must be plain or control_variate");
  }
  if (workers < 0) throw InvalidParameter("workers must be non-negative");
  solve_options(seed).schedule.validate();
}

SchemeOptions ExperimentConfig::scheme_options() const {
  SchemeOptions o;
  o.theta = theta;
  o.c2 = c2;
  o.c3 = c3;
  o.balance = balance;
  o.cn_variant = cn_variant == "plain" ? CnVariant::plain : CnVariant::control_variate;
  return o;
}

SolveOptions ExperimentConfig::solve_options(std::uint64_t run_seed) const {
  SolveOptions o;
  o.schedule.batch = batch;
  o.schedule.check_interval = check_interval;
  o.schedule.decay = decay;
  o.schedule.decay_threshold = decay_threshold;
  o.schedule.initial_lr = initial_lr;
  o.schedule.max_epochs = max_epochs;
  if (stop_lr) o.schedule.stop_lr = *stop_lr;
  o.stop_lr = stop_lr;
  o.width = width;
  o.warm_start = warm_start;
  o.seed = run_seed;
  return o;
}

int ExperimentConfig::resolved_workers() const {
  if (workers > 0) return workers;
  if (const char* env = std::getenv("BSDERK_WORKERS")) {
    const int w = std::atoi(env);
    if (w > 0) return w;
  }
  return 1;
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j = {{"problem", problem},
                      {"schemes", schemes},
                      {"theta", theta},
                      {"c2", c2},
                      {"c3", c3},
                      {"steps", steps},
                      {"batch", batch},
                      {"ntest", ntest},
                      {"balances", balances},
                      {"cn_variant", cn_variant},
                      {"initial_lr", initial_lr},
                      {"check_interval", check_interval},
                      {"decay", decay},
                      {"decay_threshold", decay_threshold},
                      {"max_epochs", max_epochs},
                      {"width", width},
                      {"warm_start", warm_start},
                      {"seed", seed},
                      {"workers", workers},
                      {"out", out},
                      {"save_models", save_models}};
  j["balance"] = balance ? nlohmann::json(*balance) : nlohmann::json(nullptr);
  j["stop_lr"] = stop_lr ? nlohmann::json(*stop_lr) : nlohmann::json(nullptr);
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidParameter("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(kConfigKeys.begin(), kConfigKeys.end(), key) == kConfigKeys.end()) {
      throw InvalidParameter("unknown config key '" + key + "'");
    }
  }
  ExperimentConfig c;
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("problem", c.problem);
    get("schemes", c.schemes);
    get("theta", c.theta);
    get("c2", c.c2);
    get("c3", c.c3);
    get("steps", c.steps);
    get("batch", c.batch);
    get("ntest", c.ntest);
    get("balances", c.balances);
    get("cn_variant", c.cn_variant);
    get("initial_lr", c.initial_lr);
    get("check_interval", c.check_interval);
    get("decay", c.decay);
    get("decay_threshold", c.decay_threshold);
    get("max_epochs", c.max_epochs);
    get("width", c.width);
    get("warm_start", c.warm_start);
    get("seed", c.seed);
    get("workers", c.workers);
    get("out", c.out);
    get("save_models", c.save_models);
    if (j.contains("balance") && !j.at("balance").is_null()) c.balance = j.at("balance").get<double>();
    if (j.contains("stop_lr") && !j.at("stop_lr").is_null()) c.stop_lr = j.at("stop_lr").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidParameter(std::string("malformed config: ") + e.what());
  }
  return c;
}

std::string blob_hash(const std::string& content) {
  const std::string data = "blob " + std::to_string(content.size()) + std::string(1, '\0') + content;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha1(), nullptr) != 1) {
    throw std::runtime_error("SHA-1 digest failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return hex.str();
}

std::vector<CellSummary> summarize_cells(const std::vector<RunRecord>& runs, std::optional<double> exact) {
  std::vector<CellSummary> cells;
  auto find = [&](const RunRecord& r) -> CellSummary& {
    for (auto& c : cells) {
      if (c.scheme == r.scheme && c.steps == r.steps) return c;
    }
    cells.push_back({});
    cells.back().scheme = r.scheme;
    cells.back().steps = r.steps;
    cells.back().exact = exact;
    return cells.back();
  };
  for (const auto& r : runs) find(r);
  for (auto& c : cells) {
    double sum = 0.0;
    for (const auto& r : runs) {
      if (r.scheme != c.scheme || r.steps != c.steps) continue;
      ++c.runs;
      if (!r.ok) continue;
      ++c.runs_ok;
      sum += r.y0;
    }
    c.complete = c.runs_ok == c.runs && c.runs > 0;
    if (c.runs_ok == 0) {
      c.mean_y0 = c.epsilon = c.std_error = c.sd_y0 = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    c.mean_y0 = sum / c.runs_ok;
    double ss = 0.0;
    for (const auto& r : runs) {
      if (r.scheme == c.scheme && r.steps == c.steps && r.ok) ss += (r.y0 - c.mean_y0) * (r.y0 - c.mean_y0);
    }
    c.sd_y0 = c.runs_ok > 1 ? std::sqrt(ss / (c.runs_ok - 1)) : 0.0;
    c.std_error = c.sd_y0 / std::sqrt(static_cast<double>(c.runs_ok));
    c.epsilon = exact ? std::abs(c.mean_y0 - *exact) : std::numeric_limits<double>::quiet_NaN();
  }
  return cells;
}

double fit_order(const std::vector<CellSummary>& cells, const std::string& scheme) {
  std::vector<double> xs, ys, ws;
  for (const auto& c : cells) {
    if (c.scheme != scheme || c.runs_ok == 0 || !std::isfinite(c.epsilon) || !(c.epsilon > 0.0)) continue;
    if (c.epsilon < c.std_error) continue;
    const double rel = c.std_error / (c.epsilon * std::log(2.0));
    xs.push_back(c.steps);
    ys.push_back(c.epsilon);
    ws.push_back(1.0 / (rel * rel + 0.01));
  }
  if (xs.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  return loglog_slope(xs, ys, ws);
}

StudyResult run_convergence_study(const ExperimentConfig& config, const BsdeProblem* problem) {
  config.validate();
  const auto owned = owned_problem(config, problem);
  const BsdeProblem& p = problem ? *problem : *owned;

  StudyResult result;
  result.runs = run_all(p, config);
  result.cells = summarize_cells(result.runs, p.exact_y0());
  nlohmann::json orders = nlohmann::json::object(), incomplete = nlohmann::json::array(),
                 cells = nlohmann::json::array();
  for (const auto& s : config.schemes) {
    const double o = fit_order(result.cells, s);
    result.orders[s] = o;
    orders[s] = std::isfinite(o) ? nlohmann::json(o) : nlohmann::json(nullptr);
  }
  for (const auto& c : result.cells) {
    cells.push_back(cell_json(c));
    if (!c.complete) incomplete.push_back({{"scheme", c.scheme}, {"N", c.steps}});
  }
  const std::string echo = config.to_json().dump();
  result.summary = {{"config", config.to_json()}, {"input_hash", blob_hash(echo)}, {"problem", p.name()},
                    {"orders", orders},           {"cells", cells},              {"incomplete", incomplete}};
  if (auto e = p.exact_y0()) result.summary["exact_y0"] = *e;

  if (!config.out.empty()) {
    fs::create_directories(config.out);
    std::ofstream runs(fs::path(config.out) / "runs.csv");
    runs << "scheme,N,run,seed,y0,status\n" << std::setprecision(17);
    for (const auto& r : result.runs) {
      runs << r.scheme << ',' << r.steps << ',' << r.run << ',' << r.seed << ',';
      if (r.ok) runs << r.y0 << ",ok\n";
      else runs << ",failed: " << clean(r.message) << '\n';
    }
    std::ofstream errors(fs::path(config.out) / "errors.csv");
    write_cells(errors, result.cells);
    std::ofstream timing(fs::path(config.out) / "timing.csv");
    timing << "scheme,N,run,seconds\n" << std::setprecision(6);
    for (const auto& r : result.runs) timing << r.scheme << ',' << r.steps << ',' << r.run << ',' << r.seconds << '\n';
    std::ofstream(fs::path(config.out) / "summary.json") << result.summary.dump(2) << '\n';
  }
  return result;
}

std::vector<TimingRow> run_timing_study(const ExperimentConfig& config, const BsdeProblem* problem) {
  config.validate();
  const auto owned = owned_problem(config, problem);
  const BsdeProblem& p = problem ? *problem : *owned;
  const auto runs = run_all(p, config);
  std::vector<TimingRow> rows;
  for (const auto& s : config.schemes) {
    double previous = 0.0;
    for (int n : config.steps) {
      TimingRow row{s, n, 0, 0.0, 0.0};
      for (const auto& r : runs) {
        if (r.scheme == s && r.steps == n && r.ok) {
          row.mean_seconds += r.seconds;
          ++row.runs;
        }
      }
      row.mean_seconds = row.runs ? row.mean_seconds / row.runs : std::numeric_limits<double>::quiet_NaN();
      row.ratio = previous > 0.0 ? row.mean_seconds / previous : std::numeric_limits<double>::quiet_NaN();
      previous = row.mean_seconds;
      rows.push_back(row);
    }
  }
  if (!config.out.empty()) {
    fs::create_directories(config.out);
    std::ofstream out(fs::path(config.out) / "timing_study.csv");
    out << "scheme,N,runs,mean_seconds,ratio\n" << std::setprecision(6);
    for (const auto& r : rows) {
      out << r.scheme << ',' << r.steps << ',' << r.runs << ',' << r.mean_seconds << ',';
      if (std::isfinite(r.ratio)) out << r.ratio;
      out << '\n';
    }
    std::ofstream timing(fs::path(config.out) / "timing.csv");
    timing << "scheme,N,run,seconds\n" << std::setprecision(6);
    for (const auto& r : runs) timing << r.scheme << ',' << r.steps << ',' << r.run << ',' << r.seconds << '\n';
  }
  return rows;
}

std::vector<BalanceRow> run_balance_sweep(const ExperimentConfig& config, const std::vector<double>& balances,
                                          const BsdeProblem* problem) {
  if (balances.empty()) throw InvalidParameter("empty list of balance numbers");
  for (const auto& s : config.schemes) {
    if (s != "cn") throw InvalidParameter("the balance sweep runs the cn scheme only");
  }
  config.validate();
  const auto owned = owned_problem(config, problem);
  const BsdeProblem& p = problem ? *problem : *owned;
  std::vector<BalanceRow> rows;
  for (double b : balances) {
    if (!(b > 0.0)) throw InvalidParameter("balance numbers must be positive");
    ExperimentConfig c = config;
    c.balance = b;
    c.out.clear();
    const auto cells = summarize_cells(run_all(p, c), p.exact_y0());
    for (const auto& cell : cells) rows.push_back({b, cell});
  }
  if (!config.out.empty()) {
    fs::create_directories(config.out);
    std::ofstream out(fs::path(config.out) / "balance.csv");
    out << "scheme,balance,log2_balance,N,runs,runs_ok,mean_y0,epsilon,std_error,complete\n" << std::setprecision(17);
    for (const auto& r : rows) {
      out << r.cell.scheme << ',' << r.balance << ',' << std::log2(r.balance) << ',' << r.cell.steps << ','
          << r.cell.runs << ',' << r.cell.runs_ok << ',' << r.cell.mean_y0 << ',' << r.cell.epsilon << ','
          << r.cell.std_error << ',' << (r.cell.complete ? 1 : 0) << '\n';
    }
  }
  return rows;
}

}  // namespace bsderk
