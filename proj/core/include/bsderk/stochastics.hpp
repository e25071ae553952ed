#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bsderk/grid_tableau.hpp"
#include "bsderk/random.hpp"

namespace bsderk {

enum class ForwardKind { drifted_bm, cir_nv };

/// Forward diffusion X. Drifted BM: X_t = x0 + mu t + sigma W_t. CIR: each
/// coordinate follows dX = a(b - X)dt + sigma_cir sqrt(X) dW, simulated with
/// the Ninomiya-Victoir splitting.
class ForwardModel {
 public:
  static ForwardModel drifted_bm(Eigen::VectorXd mu, Eigen::MatrixXd sigma, Eigen::VectorXd x0);
  static ForwardModel cir_nv(int dim, double a, double b, double sigma_cir, double x0);

  ForwardKind kind() const { return kind_; }
  int dim() const { return static_cast<int>(x0_.size()); }
  const Eigen::VectorXd& x0() const { return x0_; }
  const Eigen::VectorXd& mu() const { return mu_; }
  const Eigen::MatrixXd& sigma() const { return sigma_; }
  double a() const { return a_; }
  double b() const { return b_; }
  double sigma_cir() const { return sigma_cir_; }

  /// mu(x) and sigma(x) of the generator, used for PDE residual checks.
  Eigen::VectorXd drift_at(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd diffusion_at(const Eigen::VectorXd& x) const;

  /// Advances the d x B states over a sub-interval of length dt driven by the
  /// Brownian increments dw (d x B). Exact for BM, one NV step for CIR.
  /// Returns the number of clamped NV square roots.
  std::int64_t advance(Eigen::MatrixXd& x, double dt, const Eigen::MatrixXd& dw) const;

 private:
  ForwardModel() = default;

  ForwardKind kind_ = ForwardKind::drifted_bm;
  Eigen::VectorXd mu_;
  Eigen::MatrixXd sigma_;
  Eigen::VectorXd x0_;
  double a_ = 0.0;
  double b_ = 0.0;
  double sigma_cir_ = 0.0;
};

/// Forward states and increments on every instance of the grid.
struct PathBatch {
  int steps = 0;
  int stages = 0;  // Q
  int batch = 0;
  std::uint64_t seed = 0;
  std::int64_t clamps = 0;
  /// states[n * (Q+1) + (q-1)] is X at t_{n,q}, d x B.
  std::vector<Eigen::MatrixXd> states;
  /// increments[n * (Q+1) + (q-1)] is W_{t_{n+1}} - W_{t_{n,q}}, d x B.
  std::vector<Eigen::MatrixXd> increments;

  const Eigen::MatrixXd& x(int n, int q) const { return states.at(index(n, q)); }
  const Eigen::MatrixXd& dw(int n, int q) const { return increments.at(index(n, q)); }
  std::size_t index(int n, int q) const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(stages + 1) + static_cast<std::size_t>(q - 1);
  }
};

/// States and increments of the single step [t_n, t_{n+1}], the unit of data
/// consumed by one stage loss evaluation.
struct StepBatch {
  /// x[q-1] is X at t_{n,q}; x[0] = X_{n+1}, x[Q] = X_n.
  std::vector<Eigen::MatrixXd> x;
  /// dw[q-1] = W_{t_{n+1}} - W_{t_{n,q}}; dw[0] = 0.
  std::vector<Eigen::MatrixXd> dw;
  std::int64_t clamps = 0;

  int batch() const { return x.empty() ? 0 : static_cast<int>(x.front().cols()); }
};

PathBatch simulate_bm(const ForwardModel& model, const TimeGrid& grid, int batch, std::uint64_t seed);
PathBatch simulate_cir_nv(const ForwardModel& model, const TimeGrid& grid, int batch, std::uint64_t seed);
/// Dispatches on the model kind.
PathBatch simulate(const ForwardModel& model, const TimeGrid& grid, int batch, std::uint64_t seed);

/// Fresh data for step n drawn from `engine`. X_n is sampled exactly for BM and
/// by NV over the instances of the steps before n for CIR.
StepBatch sample_step(const ForwardModel& model, const TimeGrid& grid, int n, int batch, Engine& engine);

struct HWeights {
  int steps = 0;
  int stages = 0;
  /// hq[n * (Q+1) + (q-1)], zero for q = 1.
  std::vector<Eigen::MatrixXd> hq;
  /// hqk[(n * (Q+1) + (q-1)) * (Q+1) + (k-1)] for k < q, zero when c_k = c_q.
  std::vector<Eigen::MatrixXd> hqk;
  /// min and max over (n, q) and components of h * E|H_q|^2.
  double lambda = 0.0;
  double Lambda = 0.0;

  const Eigen::MatrixXd& h(int n, int q) const {
    return hq.at(static_cast<std::size_t>(n * (stages + 1) + q - 1));
  }
  const Eigen::MatrixXd& h(int n, int q, int k) const {
    return hqk.at(static_cast<std::size_t>((n * (stages + 1) + q - 1) * (stages + 1) + k - 1));
  }
};

HWeights build_h_weights(const TimeGrid& grid, const PathBatch& paths);

/// H_q = dW_q/(c_q h) and H_{q,k} = (dW_q - dW_k)/((c_q - c_k) h) computed
/// from one step's increments.
Eigen::MatrixXd h_weight(const TimeGrid& grid, const std::vector<Eigen::MatrixXd>& dw, int q);
Eigen::MatrixXd h_weight(const TimeGrid& grid, const std::vector<Eigen::MatrixXd>& dw, int q, int k);

struct Moments {
  double mean = 0.0;
  double second = 0.0;
};

/// Closed-form E[X_T] and E[X_T^2] of the scalar CIR process.
Moments cir_moments(double a, double b, double sigma, double x0, double horizon);
/// Exact first two moments of the unclamped NV scheme after `steps` steps.
Moments nv_moments(double a, double b, double sigma, double x0, double horizon, int steps);

struct TestFunction {
  std::string name;
  std::function<double(double)> v;
};

struct WeakOrderResult {
  std::vector<int> steps;
  /// errors[i][j] = |E v_i(X^{N_j}_T) - reference| for test function i.
  std::vector<std::vector<double>> errors;
  /// Monte Carlo standard errors of the coupled differences.
  std::vector<std::vector<double>> std_errors;
  std::vector<double> slopes;
  /// Fine-grid reference E v_i(X_T) with its standard error.
  std::vector<double> reference;
  std::vector<double> reference_se;
  int fine_steps = 0;
};

/// Weak error slopes of the forward scheme on the first coordinate. Each
/// coarse path is driven by sums of the increments of a fine path with
/// 16 * max(steps) steps, which serves as the reference. Errors below 1e-13
/// are excluded from the slope fit.
WeakOrderResult weak_order_probe(const ForwardModel& model, double horizon, const std::vector<int>& steps,
                                 const std::vector<TestFunction>& tests, int batch, std::uint64_t seed);

/// Least-squares slope of log2 y against log2 x, negated.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y,
                    const std::vector<double>& weights = {});

/// Binary trace: int32 header (N, Q, B, d) then, per (n, q, sample), the
/// state and the increment as little-endian float64.
void write_path_trace(const PathBatch& paths, const std::string& file);

}  // namespace bsderk
