#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "bsderk/grid_tableau.hpp"
#include "bsderk/neuralnet.hpp"
#include "bsderk/problems.hpp"
#include "bsderk/stochastics.hpp"

namespace bsderk {

enum class CnVariant { plain, control_variate };

/// Tableau plus the per-stage loss configuration. Vectors are indexed by
/// q - 1; entry 0 (the terminal instance) is unused.
struct SchemeSpec {
  std::string name;
  RKTableau tableau;
  std::vector<double> balance;
  std::vector<bool> needs_a;
  CnVariant cn_variant = CnVariant::control_variate;

  int stages() const { return tableau.stages(); }
  /// Number of network outputs at stage q: 1 + d, or 1 + 2d with an A head.
  int output_dim(int q, int d) const { return needs_a.at(static_cast<std::size_t>(q - 1)) ? 1 + 2 * d : 1 + d; }
  nlohmann::json to_json() const;
};

struct SchemeOptions {
  double theta = 0.5;
  double c2 = 0.5;
  double c3 = 1.0;
  std::optional<double> balance;  // replaces every per-stage default
  CnVariant cn_variant = CnVariant::control_variate;
};

/// Names: euler-implicit, euler-explicit, theta, cn, rk2, rk3.
SchemeSpec make_scheme(const std::string& name, const SchemeOptions& options = {});
/// Per-stage A-head flags: none for the Euler schemes, otherwise wherever
/// some weight a_qk H_q - alpha_qk H_{q,k} does not vanish identically.
std::vector<bool> stage_needs_a(const RKTableau& tableau);
/// Scheme spec for an arbitrary tableau; balance 25 c_q at A-head stages.
SchemeSpec scheme_from_tableau(const RKTableau& tableau, std::string name = "custom");
std::vector<std::string> scheme_names();
/// Stop learning rate default: 1e-6 for the Euler schemes, 1e-9 otherwise.
double default_stop_lr(const SchemeSpec& scheme);

/// (U, V) as a function of the state at one instance: either the terminal
/// pair (g, sigma^T grad g) or a frozen stage network.
class StageFunction {
 public:
  virtual ~StageFunction() = default;
  virtual void evaluate(const Eigen::MatrixXd& x, Eigen::ArrayXd& u, Eigen::MatrixXd& v) const = 0;
};

class TerminalFunction : public StageFunction {
 public:
  explicit TerminalFunction(const BsdeProblem& problem) : problem_(problem) {}
  void evaluate(const Eigen::MatrixXd& x, Eigen::ArrayXd& u, Eigen::MatrixXd& v) const override;

 private:
  const BsdeProblem& problem_;
};

class NetworkFunction : public StageFunction {
 public:
  explicit NetworkFunction(const Mlp& net) : net_(net) {}
  void evaluate(const Eigen::MatrixXd& x, Eigen::ArrayXd& u, Eigen::MatrixXd& v) const override;

 private:
  const Mlp& net_;
};

/// Per-sample quantities of the stage (n, q) loss that do not depend on the
/// network being trained.
struct StageTarget {
  Eigen::MatrixXd x;         // X_{n,q}, network input
  Eigen::ArrayXd data;       // Phi_1(X_{n+1}) + h sum_{k<q} a_qk f_k
  Eigen::MatrixXd a_target;  // sum_{k<q} (a_qk H_q - alpha_qk H_{q,k}) h f_k, empty without A head
  Eigen::MatrixXd dw;        // W_{t_{n+1}} - W_{t_{n,q}}
  double time = 0.0;         // t_{n,q}
  double implicit = 0.0;     // h a_qq
  double balance = 0.0;
  double step = 0.0;
  bool has_a = false;
};

/// Builds the target of stage q from one step of data. prior[k-1] is
/// (Phi_k, Psi_k) for k < q; prior[0] is the next step's output.
StageTarget build_stage_target(const BsdeProblem& problem, const TimeGrid& grid, const SchemeSpec& scheme, int n, int q,
                               const StepBatch& batch, const std::vector<const StageFunction*>& prior);

/// Mean of |D - {U - h a_qq f(U, V) + (V + A) dW}|^2 + balance h |A - A_target|^2.
double stage_loss(const BsdeProblem& problem, const StageTarget& target, const Eigen::MatrixXd& output,
                  Eigen::MatrixXd* grad_output = nullptr);

/// Generic stage loss evaluated for a network.
double loss_rk_stage(const Mlp& net, const StepBatch& batch, const BsdeProblem& problem, const TimeGrid& grid,
                     const SchemeSpec& scheme, int n, int q, const std::vector<const StageFunction*>& prior,
                     Eigen::MatrixXd* grad_output = nullptr);

/// Implicit Euler: |phi(X_{n+1}) - {U - h f(t_n, X_n, U, V) + V dW_n}|^2.
double loss_euler_implicit(const Eigen::MatrixXd& output, const StepBatch& batch, const BsdeProblem& problem,
                           const TimeGrid& grid, int n, const StageFunction& next, Eigen::MatrixXd* grad_output = nullptr);
/// Explicit Euler: |phi(X_{n+1}) + h f(t_{n+1}, X_{n+1}, phi, psi) - {U + V dW_n}|^2.
double loss_euler_explicit(const Eigen::MatrixXd& output, const StepBatch& batch, const BsdeProblem& problem,
                           const TimeGrid& grid, int n, const StageFunction& next, Eigen::MatrixXd* grad_output = nullptr);
/// Crank-Nicolson with A head and penalty balance h |A - A_target|^2.
double loss_crank_nicolson(const Eigen::MatrixXd& output, const StepBatch& batch, const BsdeProblem& problem,
                           const TimeGrid& grid, int n, const StageFunction& next, CnVariant variant, double balance,
                           Eigen::MatrixXd* grad_output = nullptr);

double loss_euler_implicit(const Mlp& net, const StepBatch& batch, const BsdeProblem& problem, const TimeGrid& grid,
                           int n, const StageFunction& next);
double loss_euler_explicit(const Mlp& net, const StepBatch& batch, const BsdeProblem& problem, const TimeGrid& grid,
                           int n, const StageFunction& next);
double loss_crank_nicolson(const Mlp& net, const StepBatch& batch, const BsdeProblem& problem, const TimeGrid& grid,
                           int n, const StageFunction& next, CnVariant variant, double balance);

struct SolveOptions {
  TrainSchedule schedule;
  std::optional<double> stop_lr;  // defaults per scheme
  int width = 0;                  // 0: d + 10
  bool warm_start = true;
  std::uint64_t seed = 0;
  int normalization_samples = 10000;
  bool keep_logs = true;
};

struct StageLog {
  int n = 0;
  int q = 0;
  TrainLog log;
  std::int64_t clamps = 0;
};

/// Trained stage networks for every step; step outputs are stage Q+1.
class SolvedBsde {
 public:
  SolvedBsde(const BsdeProblem& problem, SchemeSpec scheme, TimeGrid grid);

  const SchemeSpec& scheme() const { return scheme_; }
  const TimeGrid& grid() const { return grid_; }
  double y0() const { return y0_; }
  const std::vector<StageLog>& logs() const { return logs_; }
  /// Network of stage q at step n, 2 <= q <= Q+1.
  const Mlp& network(int n, int q) const;
  /// (U_n, V_n) at arbitrary points; n = N gives the terminal closure.
  void evaluate(int n, const Eigen::MatrixXd& x, Eigen::ArrayXd& u, Eigen::MatrixXd& v) const;

  /// Directory with manifest.json, one checkpoint and one log CSV per stage.
  void save(const std::string& dir, const nlohmann::json& extra = {}) const;

 private:
  friend SolvedBsde backward_solve(const BsdeProblem&, const SchemeSpec&, const TimeGrid&, const SolveOptions&);

  const BsdeProblem* problem_;
  SchemeSpec scheme_;
  TimeGrid grid_;
  std::vector<std::vector<Mlp>> nets_;  // [n][q-2]
  std::vector<StageLog> logs_;
  double y0_ = 0.0;
  nlohmann::json options_;
};

/// Trains the stage networks backward in time, n = N-1, ..., 0 and
/// q = 2, ..., Q+1. Refuses to run when the implicit stages are not
/// contractive at the chosen step.
SolvedBsde backward_solve(const BsdeProblem& problem, const SchemeSpec& scheme, const TimeGrid& grid,
                          const SolveOptions& options);

}  // namespace bsderk
