#include "bsderk/schemes.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>

#include "bsderk/errors.hpp"

namespace bsderk {

namespace {

// Head views of a network output block (1 + d or 1 + 2d rows).
struct Heads {
  Eigen::ArrayXd u;
  Eigen::MatrixXd v;
  Eigen::MatrixXd a;
};

Heads split(const Eigen::MatrixXd& out, int d, bool with_a) {
  const int expected = with_a ? 1 + 2 * d : 1 + d;
  if (out.rows() != expected) {
    throw InvalidParameter("network output has " + std::to_string(out.rows()) + " rows, expected " +
                           std::to_string(expected));
  }
  Heads h;
  h.u = out.row(0).transpose().array();
  h.v = out.middleRows(1, d);
  if (with_a) h.a = out.middleRows(1 + d, d);
  return h;
}

// Column-wise dot product of two d x B blocks.
Eigen::ArrayXd coldot(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a.array() * b.array()).colwise().sum().transpose();
}

Eigen::MatrixXd scale_columns(const Eigen::MatrixXd& m, const Eigen::ArrayXd& w) {
  return (m.array().rowwise() * w.transpose()).matrix();
}

double finite_mean(const Eigen::ArrayXd& per_sample) {
  for (Eigen::Index i = 0; i < per_sample.size(); ++i) {
    if (!std::isfinite(per_sample[i])) throw NumericalError("non-finite loss", i);
  }
  return per_sample.mean();
}

Eigen::ArrayXd driver_value(const BsdeProblem& p, double t, const Eigen::MatrixXd& x, const Eigen::ArrayXd& y,
                            const Eigen::MatrixXd& z) {
  if (p.zero_driver()) return Eigen::ArrayXd::Zero(x.cols());
  Eigen::ArrayXd f;
  p.driver(t, x, y, z, f, nullptr, nullptr);
  return f;
}

class StageLossBatch : public LossBatch {
 public:
  StageLossBatch(const BsdeProblem& problem, StageTarget target) : problem_(problem), target_(std::move(target)) {}
  const Eigen::MatrixXd& inputs() const override { return target_.x; }
  double loss(const Eigen::MatrixXd& output, Eigen::MatrixXd* grad) const override {
    return stage_loss(problem_, target_, output, grad);
  }

 private:
  const BsdeProblem& problem_;
  StageTarget target_;
};

class StageTask : public RegressionTask {
 public:
  StageTask(const BsdeProblem& problem, const TimeGrid& grid, const SchemeSpec& scheme, int n, int q,
            std::vector<const StageFunction*> prior)
      : problem_(problem), grid_(grid), scheme_(scheme), n_(n), q_(q), prior_(std::move(prior)) {}

  std::unique_ptr<LossBatch> draw(int batch, Engine& engine) const override {
    StepBatch data = sample_step(problem_.forward(), grid_, n_, batch, engine);
    clamps_ += data.clamps;
    return std::make_unique<StageLossBatch>(problem_,
                                            build_stage_target(problem_, grid_, scheme_, n_, q_, data, prior_));
  }

  std::int64_t clamps() const { return clamps_.load(); }

 private:
  const BsdeProblem& problem_;
  const TimeGrid& grid_;
  const SchemeSpec& scheme_;
  int n_;
  int q_;
  std::vector<const StageFunction*> prior_;
  mutable std::atomic<std::int64_t> clamps_{0};
};

void check_step_batch(const StepBatch& batch, int stages) {
  if (static_cast<int>(batch.x.size()) != stages + 1 || static_cast<int>(batch.dw.size()) != stages + 1) {
    throw InvalidParameter("step batch does not match the scheme stages");
  }
}

}  // namespace

nlohmann::json SchemeSpec::to_json() const {
  return {{"name", name},
          {"tableau", tableau.to_json()},
          {"balance", balance},
          {"needs_a", std::vector<bool>(needs_a.begin(), needs_a.end())},
          {"cn_variant", cn_variant == CnVariant::plain ? "plain" : "control_variate"}};
}

std::vector<bool> stage_needs_a(const RKTableau& tableau) {
  const int Q = tableau.stages();
  std::vector<bool> out(static_cast<std::size_t>(Q + 1), false);
  // The implemented Euler schemes regress Z on H without an A head.
  if (Q == 1 && (tableau.a(2, 2) == 0.0 || tableau.a(2, 2) == 1.0)) return out;
  for (int q = 2; q <= Q + 1; ++q) {
    // A head iff some weight a_qk H_q - alpha_qk H_{q,k} is not identically
    // zero (H_{q,1} = H_q, and H_{q,k} = 0 when c_k = c_q).
    bool differs = false;
    for (int k = 1; k < q; ++k) {
      if (k == 1) {
        differs |= tableau.a(q, 1) != tableau.alpha(q, 1);
      } else if (tableau.c(k) == tableau.c(q)) {
        differs |= tableau.a(q, k) != 0.0;
      } else {
        differs |= tableau.a(q, k) != 0.0 || tableau.alpha(q, k) != 0.0;
      }
    }
    out[static_cast<std::size_t>(q - 1)] = differs;
  }
  return out;
}

SchemeSpec scheme_from_tableau(const RKTableau& tableau, std::string name) {
  SchemeSpec s{std::move(name), tableau, {}, stage_needs_a(tableau), CnVariant::control_variate};
  const int Q = tableau.stages();
  s.balance.assign(static_cast<std::size_t>(Q + 1), 0.0);
  for (int q = 2; q <= Q + 1; ++q) {
    if (s.needs_a[static_cast<std::size_t>(q - 1)]) s.balance[static_cast<std::size_t>(q - 1)] = 25.0 * tableau.c(q);
  }
  return s;
}

SchemeSpec make_scheme(const std::string& name, const SchemeOptions& o) {
  auto tableau = [&]() -> RKTableau {
    if (name == "euler-implicit") return theta_tableau(1.0);
    if (name == "euler-explicit") return theta_tableau(0.0);
    if (name == "cn") return crank_nicolson_tableau();
    if (name == "theta") return theta_tableau(o.theta);
    if (name == "rk2") return rk2_tableau(o.c2);
    if (name == "rk3") return rk3_tableau(o.c2, o.c3);
    throw InvalidParameter("unknown scheme '" + name + "'");
  };
  SchemeSpec s = scheme_from_tableau(tableau(), name);
  if ((name == "cn" || name == "theta") && s.needs_a[1]) s.balance[1] = 4.0 / 3.0;
  s.cn_variant = o.cn_variant;
  if (o.balance) {
    if (!(*o.balance > 0.0)) throw InvalidParameter("balance number must be positive");
    for (std::size_t i = 0; i < s.balance.size(); ++i) {
      if (s.needs_a[i]) s.balance[i] = *o.balance;
    }
  }
  return s;
}

std::vector<std::string> scheme_names() { return {"euler-implicit", "euler-explicit", "theta", "cn", "rk2", "rk3"}; }

double default_stop_lr(const SchemeSpec& scheme) {
  const auto k = scheme.tableau.kind();
  return (k == SchemeKind::euler_implicit || k == SchemeKind::euler_explicit) ? 1e-6 : 1e-9;
}

void TerminalFunction::evaluate(const Eigen::MatrixXd& x, Eigen::ArrayXd& u, Eigen::MatrixXd& v) const {
  problem_.terminal_pair(x, u, v);
}

void NetworkFunction::evaluate(const Eigen::MatrixXd& x, Eigen::ArrayXd& u, Eigen::MatrixXd& v) const {
  const Eigen::MatrixXd out = net_.forward(x);
  const int d = static_cast<int>(x.rows());
  u = out.row(0).transpose().array();
  v = out.middleRows(1, d);
}

StageTarget build_stage_target(const BsdeProblem& problem, const TimeGrid& grid, const SchemeSpec& scheme, int n, int q,
                               const StepBatch& batch, const std::vector<const StageFunction*>& prior) {
  const RKTableau& tab = scheme.tableau;
  const int Q = tab.stages();
  if (q < 2 || q > Q + 1) {
    throw InvalidParameter("stage q=" + std::to_string(q) + " has no loss; q=1 is the previous step's output");
  }
  if (static_cast<int>(prior.size()) < q - 1) throw InvalidParameter("missing prior stage functions");
  check_step_batch(batch, Q);
  const double h = grid.step();
  const auto qi = static_cast<std::size_t>(q - 1);

  StageTarget t;
  t.x = batch.x[qi];
  t.dw = batch.dw[qi];
  t.time = grid.instance(n, q);
  t.implicit = h * tab.a(q, q);
  t.has_a = scheme.needs_a.at(qi);
  t.balance = scheme.balance.at(qi);
  t.step = h;
  if (t.has_a && !(t.balance > 0.0)) throw InvalidParameter("balance number must be positive at A-head stages");

  const auto B = batch.batch();
  const int d = static_cast<int>(t.x.rows());
  t.data = Eigen::ArrayXd::Zero(B);
  if (t.has_a) t.a_target = Eigen::MatrixXd::Zero(d, B);

  Eigen::ArrayXd u;
  Eigen::MatrixXd v;
  for (int k = 1; k < q; ++k) {
    const auto ki = static_cast<std::size_t>(k - 1);
    const Eigen::MatrixXd& xk = batch.x[ki];
    prior[ki]->evaluate(xk, u, v);
    if (k == 1) t.data = u;
    const double akq = tab.a(q, k), alq = tab.alpha(q, k);
    if (akq == 0.0 && (!t.has_a || alq == 0.0)) continue;
    const Eigen::ArrayXd f = driver_value(problem, grid.instance(n, k), xk, u, v);
    t.data += h * akq * f;
    if (!t.has_a) continue;
    if (akq != 0.0) t.a_target += scale_columns(h_weight(grid, batch.dw, q), akq * h * f);
    if (alq != 0.0) t.a_target -= scale_columns(h_weight(grid, batch.dw, q, k), alq * h * f);
  }

  if (t.has_a && Q == 1 && scheme.cn_variant == CnVariant::control_variate && !problem.zero_driver()) {
    // Subtract an F_{t_n}-measurable copy of f_1 multiplying H; its
    // conditional expectation against H vanishes.
    const Eigen::MatrixXd& xn = batch.x[1];
    prior[0]->evaluate(xn, u, v);
    const Eigen::ArrayXd fc = driver_value(problem, grid.time(n + 1), xn, u, v);
    const double w = (tab.a(2, 1) - tab.alpha(2, 1)) * h;
    t.a_target -= scale_columns(h_weight(grid, batch.dw, 2), w * fc);
  }
  return t;
}

double stage_loss(const BsdeProblem& problem, const StageTarget& t, const Eigen::MatrixXd& output,
                  Eigen::MatrixXd* grad) {
  const int d = static_cast<int>(t.x.rows());
  const auto B = t.x.cols();
  if (output.cols() != B) throw InvalidParameter("output batch size mismatch");
  const Heads hd = split(output, d, t.has_a);

  Eigen::ArrayXd f, fy;
  Eigen::MatrixXd fz;
  const bool implicit = t.implicit != 0.0 && !problem.zero_driver();
  if (implicit) problem.driver(t.time, t.x, hd.u, hd.v, f, &fy, &fz);

  Eigen::ArrayXd r = t.data - hd.u;
  if (implicit) r += t.implicit * f;
  Eigen::ArrayXd per = Eigen::ArrayXd::Zero(B);
  Eigen::MatrixXd gap;
  if (t.has_a) {
    r -= coldot(hd.v + hd.a, t.dw);
    gap = hd.a - t.a_target;
    per = t.balance * t.step * gap.array().square().colwise().sum().transpose();
  } else {
    r -= coldot(hd.v, t.dw);
  }
  per += r.square();
  const double value = finite_mean(per);

  if (grad) {
    const double s = 2.0 / static_cast<double>(B);
    grad->resize(output.rows(), B);
    Eigen::ArrayXd du = -r;
    if (implicit) du += r * t.implicit * fy;
    grad->row(0) = (s * du).matrix().transpose();
    Eigen::MatrixXd dv = -scale_columns(t.dw, r);
    if (implicit) dv += scale_columns(fz, t.implicit * r);
    grad->middleRows(1, d) = s * dv;
    if (t.has_a) grad->middleRows(1 + d, d) = s * (-scale_columns(t.dw, r) + t.balance * t.step * gap);
  }
  return value;
}

double loss_rk_stage(const Mlp& net, const StepBatch& batch, const BsdeProblem& problem, const TimeGrid& grid,
                     const SchemeSpec& scheme, int n, int q, const std::vector<const StageFunction*>& prior,
                     Eigen::MatrixXd* grad_output) {
  const StageTarget t = build_stage_target(problem, grid, scheme, n, q, batch, prior);
  return stage_loss(problem, t, net.forward(t.x), grad_output);
}

double loss_euler_implicit(const Eigen::MatrixXd& output, const StepBatch& batch, const BsdeProblem& problem,
                           const TimeGrid& grid, int n, const StageFunction& next, Eigen::MatrixXd* grad) {
  check_step_batch(batch, 1);
  const int d = problem.dim();
  const double h = grid.step();
  const Eigen::MatrixXd& xn = batch.x[1];
  const Eigen::MatrixXd& dw = batch.dw[1];
  Eigen::ArrayXd phi;
  Eigen::MatrixXd psi;
  next.evaluate(batch.x[0], phi, psi);
  const Heads hd = split(output, d, false);
  Eigen::ArrayXd f, fy;
  Eigen::MatrixXd fz;
  problem.driver(grid.time(n), xn, hd.u, hd.v, f, &fy, &fz);
  const Eigen::ArrayXd r = phi - (hd.u - h * f + coldot(hd.v, dw));
  const double value = finite_mean(r.square());
  if (grad) {
    const double s = 2.0 / static_cast<double>(xn.cols());
    grad->resize(1 + d, xn.cols());
    grad->row(0) = (s * r * (h * fy - 1.0)).matrix().transpose();
    grad->middleRows(1, d) = s * (scale_columns(fz, h * r) - scale_columns(dw, r));
  }
  return value;
}

double loss_euler_explicit(const Eigen::MatrixXd& output, const StepBatch& batch, const BsdeProblem& problem,
                           const TimeGrid& grid, int n, const StageFunction& next, Eigen::MatrixXd* grad) {
  check_step_batch(batch, 1);
  const int d = problem.dim();
  const double h = grid.step();
  const Eigen::MatrixXd& dw = batch.dw[1];
  Eigen::ArrayXd phi, f;
  Eigen::MatrixXd psi;
  next.evaluate(batch.x[0], phi, psi);
  problem.driver(grid.time(n + 1), batch.x[0], phi, psi, f, nullptr, nullptr);
  const Heads hd = split(output, d, false);
  const Eigen::ArrayXd r = phi + h * f - (hd.u + coldot(hd.v, dw));
  const double value = finite_mean(r.square());
  if (grad) {
    const double s = 2.0 / static_cast<double>(dw.cols());
    grad->resize(1 + d, dw.cols());
    grad->row(0) = (-s * r).matrix().transpose();
    grad->middleRows(1, d) = -s * scale_columns(dw, r);
  }
  return value;
}

double loss_crank_nicolson(const Eigen::MatrixXd& output, const StepBatch& batch, const BsdeProblem& problem,
                           const TimeGrid& grid, int n, const StageFunction& next, CnVariant variant, double balance,
                           Eigen::MatrixXd* grad) {
  check_step_batch(batch, 1);
  if (!(balance > 0.0)) throw InvalidParameter("balance number must be positive");
  const int d = problem.dim();
  const double h = grid.step();
  const Eigen::MatrixXd& xn = batch.x[1];
  const Eigen::MatrixXd& dw = batch.dw[1];
  const Eigen::MatrixXd hw = dw / h;
  Eigen::ArrayXd phi, f1;
  Eigen::MatrixXd psi;
  next.evaluate(batch.x[0], phi, psi);
  problem.driver(grid.time(n + 1), batch.x[0], phi, psi, f1, nullptr, nullptr);
  Eigen::ArrayXd weight = f1;
  if (variant == CnVariant::control_variate) {
    Eigen::ArrayXd phi_n, fc;
    Eigen::MatrixXd psi_n;
    next.evaluate(xn, phi_n, psi_n);
    problem.driver(grid.time(n + 1), xn, phi_n, psi_n, fc, nullptr, nullptr);
    weight -= fc;
  }
  const Heads hd = split(output, d, true);
  Eigen::ArrayXd f, fy;
  Eigen::MatrixXd fz;
  problem.driver(grid.time(n), xn, hd.u, hd.v, f, &fy, &fz);
  const Eigen::ArrayXd r = phi - (hd.u - 0.5 * h * f1 - 0.5 * h * f + coldot(hd.v + hd.a, dw));
  // Penalty |(h/2) w H + A|^2.
  const Eigen::MatrixXd pen = scale_columns(hw, 0.5 * h * weight) + hd.a;
  const Eigen::ArrayXd per = r.square() + balance * h * pen.array().square().colwise().sum().transpose();
  const double value = finite_mean(per);
  if (grad) {
    const double s = 2.0 / static_cast<double>(xn.cols());
    grad->resize(1 + 2 * d, xn.cols());
    grad->row(0) = (s * r * (0.5 * h * fy - 1.0)).matrix().transpose();
    grad->middleRows(1, d) = s * (scale_columns(fz, 0.5 * h * r) - scale_columns(dw, r));
    grad->middleRows(1 + d, d) = s * (balance * h * pen - scale_columns(dw, r));
  }
  return value;
}

double loss_euler_implicit(const Mlp& net, const StepBatch& batch, const BsdeProblem& problem, const TimeGrid& grid,
                           int n, const StageFunction& next) {
  check_step_batch(batch, 1);
  return loss_euler_implicit(net.forward(batch.x[1]), batch, problem, grid, n, next);
}

double loss_euler_explicit(const Mlp& net, const StepBatch& batch, const BsdeProblem& problem, const TimeGrid& grid,
                           int n, const StageFunction& next) {
  check_step_batch(batch, 1);
  return loss_euler_explicit(net.forward(batch.x[1]), batch, problem, grid, n, next);
}

double loss_crank_nicolson(const Mlp& net, const StepBatch& batch, const BsdeProblem& problem, const TimeGrid& grid,
                           int n, const StageFunction& next, CnVariant variant, double balance) {
  check_step_batch(batch, 1);
  return loss_crank_nicolson(net.forward(batch.x[1]), batch, problem, grid, n, next, variant, balance);
}

SolvedBsde::SolvedBsde(const BsdeProblem& problem, SchemeSpec scheme, TimeGrid grid)
    : problem_(&problem), scheme_(std::move(scheme)), grid_(std::move(grid)) {}

const Mlp& SolvedBsde::network(int n, int q) const {
  return nets_.at(static_cast<std::size_t>(n)).at(static_cast<std::size_t>(q - 2));
}

void SolvedBsde::evaluate(int n, const Eigen::MatrixXd& x, Eigen::ArrayXd& u, Eigen::MatrixXd& v) const {
  if (n == grid_.steps()) {
    TerminalFunction(*problem_).evaluate(x, u, v);
    return;
  }
  NetworkFunction(network(n, scheme_.stages() + 1)).evaluate(x, u, v);
}

void SolvedBsde::save(const std::string& dir, const nlohmann::json& extra) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json stages = nlohmann::json::array();
  for (std::size_t n = 0; n < nets_.size(); ++n) {
    for (std::size_t j = 0; j < nets_[n].size(); ++j) {
      const int q = static_cast<int>(j) + 2;
      const std::string stem = "n" + std::to_string(n) + "_q" + std::to_string(q);
      nets_[n][j].save((fs::path(dir) / ("net_" + stem + ".bin")).string());
      stages.push_back({{"n", n}, {"q", q}, {"checkpoint", "net_" + stem + ".bin"}, {"log", "log_" + stem + ".csv"}});
    }
  }
  for (const auto& s : logs_) {
    std::ofstream out(fs::path(dir) / ("log_n" + std::to_string(s.n) + "_q" + std::to_string(s.q) + ".csv"));
    out << "epoch,train_loss,test_loss,lr\n" << std::setprecision(17);
    for (const auto& r : s.log.rows) out << r.epoch << ',' << r.train_loss << ',' << r.test_loss << ',' << r.lr << '\n';
  }
  nlohmann::json manifest = {
      {"problem", problem_->name()},
      {"scheme", scheme_.to_json()},
      {"grid", {{"T", grid_.horizon()}, {"N", grid_.steps()}, {"c", grid_.abscissae()}}},
      {"options", options_},
      {"y0", y0_},
      {"stages", stages},
  };
  if (!extra.is_null()) manifest["extra"] = extra;
  std::ofstream(fs::path(dir) / "manifest.json") << manifest.dump(2) << '\n';
}

SolvedBsde backward_solve(const BsdeProblem& problem, const SchemeSpec& scheme, const TimeGrid& grid,
                          const SolveOptions& options) {
  const RKTableau& tab = scheme.tableau;
  const int Q = tab.stages();
  if (grid.abscissae() != tab.abscissae()) throw InvalidParameter("grid abscissae do not match the tableau");
  if (!well_posed(tab, grid.step(), problem.lipschitz())) {
    throw InvalidParameter("implicit stages are not contractive at h=" + std::to_string(grid.step()));
  }
  TrainSchedule schedule = options.schedule;
  schedule.stop_lr = options.stop_lr.value_or(default_stop_lr(scheme));
  schedule.validate();
  const int d = problem.dim();
  const int width = options.width > 0 ? options.width : d + 10;
  const int N = grid.steps();

  // Fixed input normalization from the terminal sample spread.
  Engine norm_engine = make_engine(options.seed, {0x4e4fu});
  const StepBatch terminal = sample_step(problem.forward(), grid, N - 1, std::max(2, options.normalization_samples),
                                         norm_engine);
  const Eigen::MatrixXd& xt = terminal.x[0];
  const Eigen::VectorXd mean = xt.rowwise().mean();
  const Eigen::VectorXd sd =
      ((xt.colwise() - mean).array().square().rowwise().mean().sqrt()).max(1e-6).matrix();

  SolvedBsde solved(problem, scheme, grid);
  solved.options_ = {{"seed", options.seed},
                     {"width", width},
                     {"warm_start", options.warm_start},
                     {"batch", schedule.batch},
                     {"check_interval", schedule.check_interval},
                     {"decay", schedule.decay},
                     {"decay_threshold", schedule.decay_threshold},
                     {"initial_lr", schedule.initial_lr},
                     {"stop_lr", schedule.stop_lr},
                     {"max_epochs", schedule.max_epochs}};
  solved.nets_.assign(static_cast<std::size_t>(N), {});

  TerminalFunction terminal_fn(problem);
  for (int n = N - 1; n >= 0; --n) {
    auto& step_nets = solved.nets_[static_cast<std::size_t>(n)];
    step_nets.reserve(static_cast<std::size_t>(Q));
    std::unique_ptr<NetworkFunction> next_fn;
    if (n + 1 < N) next_fn = std::make_unique<NetworkFunction>(solved.network(n + 1, Q + 1));
    std::vector<std::unique_ptr<NetworkFunction>> stage_fns;
    std::vector<const StageFunction*> prior = {next_fn ? static_cast<const StageFunction*>(next_fn.get())
                                                       : static_cast<const StageFunction*>(&terminal_fn)};
    for (int q = 2; q <= Q + 1; ++q) {
      Mlp net;
      if (options.warm_start && n + 1 < N) {
        net = solved.network(n + 1, q);
      } else {
        net = Mlp(d, width, scheme.output_dim(q, d));
        net.initialize(options.seed * 1000003ULL + static_cast<std::uint64_t>(n) * 16ULL + static_cast<std::uint64_t>(q));
        net.set_normalization(mean, sd);
      }
      StageTask task(problem, grid, scheme, n, q, prior);
      Engine engine = make_engine(options.seed, {0x5354u, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(q)});
      TrainLog log;
      try {
        log = train_to_convergence(task, net, schedule, engine);
      } catch (const NumericalError& e) {
        throw TrainingDivergence(e.what(), n, q);
      }
      if (!std::isfinite(log.final_test_loss)) throw TrainingDivergence("non-finite final loss", n, q);
      StageLog entry{n, q, {}, task.clamps()};
      if (options.keep_logs) entry.log = std::move(log);
      else entry.log.epochs = log.epochs;
      solved.logs_.push_back(std::move(entry));
      step_nets.push_back(std::move(net));
      stage_fns.push_back(std::make_unique<NetworkFunction>(step_nets.back()));
      prior.push_back(stage_fns.back().get());
    }
  }
  const Eigen::MatrixXd x0 = problem.forward().x0();
  solved.y0_ = solved.network(0, Q + 1).forward(x0)(0, 0);
  if (!std::isfinite(solved.y0_)) throw TrainingDivergence("non-finite Y0", 0, Q + 1);
  return solved;
}

}  // namespace bsderk
