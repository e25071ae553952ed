#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bsderk/stochastics.hpp"

namespace bsderk {

/// u, its time derivative, gradient and Hessian at one point.
struct PointDerivatives {
  double u = 0.0;
  double ut = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
};

/// A BSDE Y_t = g(X_T) + int_t^T f(s, X_s, Y_s, Z_s) ds - int_t^T Z_s dW_s,
/// equivalently the PDE u_t + Lu + f(t, x, u, sigma^T grad u) = 0.
///
/// Batches are column-per-sample: x and z are d x B, y and f have length B.
/// Custom problems derive from this class and can be registered by name with
/// register_problem.
class BsdeProblem {
 public:
  virtual ~BsdeProblem() = default;

  virtual std::string name() const = 0;
  virtual const ForwardModel& forward() const = 0;
  virtual double horizon() const = 0;
  int dim() const { return forward().dim(); }

  /// f and optionally its partial derivatives in y and z.
  virtual void driver(double t, const Eigen::MatrixXd& x, const Eigen::ArrayXd& y, const Eigen::MatrixXd& z,
                      Eigen::ArrayXd& f, Eigen::ArrayXd* fy, Eigen::MatrixXd* fz) const = 0;
  /// g and its gradient.
  virtual void terminal(const Eigen::MatrixXd& x, Eigen::ArrayXd& g, Eigen::MatrixXd& grad) const = 0;

  virtual bool has_exact() const { return false; }
  /// u(t, x) and optionally Z = sigma^T grad u.
  virtual void exact(double t, const Eigen::MatrixXd& x, Eigen::ArrayXd& u, Eigen::MatrixXd* z) const;
  virtual PointDerivatives exact_derivatives(double t, const Eigen::VectorXd& x) const;
  virtual std::optional<double> exact_y0() const { return std::nullopt; }

  /// Lipschitz estimate of f in y near the solution.
  virtual double lipschitz() const = 0;
  /// True when f vanishes identically.
  virtual bool zero_driver() const { return false; }

  /// Terminal pair (g, sigma^T grad g).
  void terminal_pair(const Eigen::MatrixXd& x, Eigen::ArrayXd& g, Eigen::MatrixXd& z) const;
};

/// z = sigma(x)^T v for a batch.
Eigen::MatrixXd sigma_transpose_times(const ForwardModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& v);

/// u_t + Lu + f(t, x, u, sigma^T grad u) at one point, from the exact derivatives.
double pde_residual(const BsdeProblem& problem, double t, const Eigen::VectorXd& x);

/// Drifted BM with mu = (0.2/d) 1, sigma = I/sqrt(d), g = cos(sum x) and the
/// driver that makes u = cos(sum x) e^{(T-t)/2} the solution.
class BmCosProblem : public BsdeProblem {
 public:
  explicit BmCosProblem(int dim = 10, double horizon = 1.0, double x0 = 1.0);

  std::string name() const override { return "bm-cos"; }
  const ForwardModel& forward() const override { return model_; }
  double horizon() const override { return T_; }
  void driver(double t, const Eigen::MatrixXd& x, const Eigen::ArrayXd& y, const Eigen::MatrixXd& z,
              Eigen::ArrayXd& f, Eigen::ArrayXd* fy, Eigen::MatrixXd* fz) const override;
  void terminal(const Eigen::MatrixXd& x, Eigen::ArrayXd& g, Eigen::MatrixXd& grad) const override;
  bool has_exact() const override { return true; }
  void exact(double t, const Eigen::MatrixXd& x, Eigen::ArrayXd& u, Eigen::MatrixXd* z) const override;
  PointDerivatives exact_derivatives(double t, const Eigen::VectorXd& x) const override;
  std::optional<double> exact_y0() const override;
  double lipschitz() const override;

 private:
  ForwardModel model_;
  double T_;
};

/// CIR forward coordinates with a = 1/(5d), b = 3, sigma = 1/sqrt(d), x0 = 10
/// and the same solution u = cos(sum x) e^{(T-t)/2}. The driver ignores z.
class CirCosProblem : public BsdeProblem {
 public:
  explicit CirCosProblem(int dim = 10, double horizon = 1.0);

  std::string name() const override { return "cir-cos"; }
  const ForwardModel& forward() const override { return model_; }
  double horizon() const override { return T_; }
  void driver(double t, const Eigen::MatrixXd& x, const Eigen::ArrayXd& y, const Eigen::MatrixXd& z,
              Eigen::ArrayXd& f, Eigen::ArrayXd* fy, Eigen::MatrixXd* fz) const override;
  void terminal(const Eigen::MatrixXd& x, Eigen::ArrayXd& g, Eigen::MatrixXd& grad) const override;
  bool has_exact() const override { return true; }
  void exact(double t, const Eigen::MatrixXd& x, Eigen::ArrayXd& u, Eigen::MatrixXd* z) const override;
  PointDerivatives exact_derivatives(double t, const Eigen::VectorXd& x) const override;
  std::optional<double> exact_y0() const override;
  double lipschitz() const override;

 private:
  ForwardModel model_;
  double T_;
};

struct LinearParams {
  int dim = 1;
  double horizon = 1.0;
  double mu = 0.0;     // per coordinate
  double sigma = 1.0;  // sigma * I
  double x0 = 0.0;     // per coordinate
  double alpha = 0.0;  // f = alpha y + beta sum z
  double beta = 0.0;
};

/// Drifted BM, g = sum x, f = alpha y + beta sum_i z_i, with
/// u = e^{alpha(T-t)} (sum x + d (mu + beta sigma)(T-t)).
class LinearProblem : public BsdeProblem {
 public:
  explicit LinearProblem(LinearParams p);

  std::string name() const override { return "linear-1d"; }
  const ForwardModel& forward() const override { return model_; }
  double horizon() const override { return p_.horizon; }
  void driver(double t, const Eigen::MatrixXd& x, const Eigen::ArrayXd& y, const Eigen::MatrixXd& z,
              Eigen::ArrayXd& f, Eigen::ArrayXd* fy, Eigen::MatrixXd* fz) const override;
  void terminal(const Eigen::MatrixXd& x, Eigen::ArrayXd& g, Eigen::MatrixXd& grad) const override;
  bool has_exact() const override { return true; }
  void exact(double t, const Eigen::MatrixXd& x, Eigen::ArrayXd& u, Eigen::MatrixXd* z) const override;
  PointDerivatives exact_derivatives(double t, const Eigen::VectorXd& x) const override;
  std::optional<double> exact_y0() const override;
  double lipschitz() const override { return std::abs(p_.alpha); }
  bool zero_driver() const override { return p_.alpha == 0.0 && p_.beta == 0.0; }

  const LinearParams& params() const { return p_; }

 private:
  LinearParams p_;
  ForwardModel model_;
};

std::unique_ptr<BsdeProblem> bm_cos_problem();
std::unique_ptr<BsdeProblem> cir_cos_problem();
std::unique_ptr<BsdeProblem> linear_1d_problem(LinearParams p = {});

using ProblemFactory = std::function<std::unique_ptr<BsdeProblem>()>;
/// Adds or replaces a named problem for make_problem.
void register_problem(const std::string& name, ProblemFactory factory);
/// Built-in names: bm-cos, cir-cos, linear-1d.
std::unique_ptr<BsdeProblem> make_problem(const std::string& name);
std::vector<std::string> problem_names();

}  // namespace bsderk
