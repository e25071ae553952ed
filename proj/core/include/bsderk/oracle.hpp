#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bsderk/grid_tableau.hpp"
#include "bsderk/problems.hpp"

namespace bsderk {

/// Nodes and weights for E[p(xi)], xi ~ N(0, 1); exact for polynomials of
/// degree up to 2n - 1. Weights sum to one.
struct GaussHermite {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;

  static GaussHermite standard_normal(int order);
};

/// Natural cubic spline on a uniform grid. Evaluation outside the grid
/// returns the end value and increments a counter.
class CubicSpline {
 public:
  CubicSpline() = default;
  CubicSpline(double lo, double hi, Eigen::VectorXd values);

  double operator()(double x) const;
  void evaluate(const Eigen::ArrayXd& x, Eigen::ArrayXd& out) const;
  std::int64_t clamps() const { return clamps_; }

 private:
  double lo_ = 0.0;
  double hi_ = 0.0;
  double dx_ = 1.0;
  Eigen::VectorXd y_;
  Eigen::VectorXd m_;  // second derivatives
  mutable std::int64_t clamps_ = 0;
};

struct OracleConfig {
  int nodes = 400;
  int gh_order = 32;
  double width_sd = 8.0;
  /// Overrides the automatic range [x0 + min(0, mu T) - w sigma sqrt(T), x0 + max(0, mu T) + w sigma sqrt(T)].
  std::optional<std::pair<double, double>> range;
  double fixed_point_tol = 1e-12;
  int max_iterations = 500;
  /// Per-stage A-head flags selecting the Z rule; empty means stage_needs_a.
  std::vector<bool> needs_a;
};

/// Step values on the spatial nodes.
struct OracleTables {
  Eigen::VectorXd nodes;
  std::vector<Eigen::VectorXd> y;  // y[n], n = 0..N
  std::vector<Eigen::VectorXd> z;
};

struct OracleResult {
  double y0 = 0.0;
  std::optional<double> exact;
  double abs_error = 0.0;
  std::int64_t clamps = 0;
  OracleTables tables;
};

/// Computes every conditional expectation of the Runge-Kutta scheme by
/// Gauss-Hermite quadrature against the Gaussian sub-step kernels of a 1-d
/// drifted BM. At a stage without A head Z = E[H_q (Y_{n+1} + h sum a_qk f_k)];
/// otherwise Z = E[H_q Y_{n+1} + h sum alpha_qk H_{q,k} f_k]. Implicit stages
/// are solved by fixed-point iteration.
OracleResult quadrature_solve(const BsdeProblem& problem, const RKTableau& tableau, int steps,
                              const OracleConfig& config = {});

/// Implicit Euler coded directly: Z_n = E[H Y_{n+1}], Y_n = E[Y_{n+1}] + h f(t_n, x, Y_n, Z_n).
OracleResult implicit_euler_reference(const BsdeProblem& problem, int steps, const OracleConfig& config = {});

struct OrderResult {
  std::string scheme;
  std::vector<int> steps;
  std::vector<double> y0;
  std::vector<double> errors;
  std::vector<double> running_slopes;  // NaN for the first entry
  std::vector<bool> used;              // false for points at the precision floor
  double slope = 0.0;
};

/// Least-squares slope of -log2 |error| against log2 N over the points whose
/// error is above `floor`.
OrderResult empirical_order(const BsdeProblem& problem, const RKTableau& tableau, const std::vector<int>& steps,
                            const OracleConfig& config = {}, double floor = 1e-11, const std::string& scheme = "");

/// CSV with columns scheme,N,y0,abs_error,slope_running.
void write_order_csv(std::ostream& out, const std::vector<OrderResult>& results, bool header = true);

}  // namespace bsderk
