#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace bsderk {

// Stage indices follow the usual Runge-Kutta convention and are 1-based:
// q = 1 is the instance t_{n+1}, q = Q+1 the instance t_n.

enum class SchemeKind { euler_implicit, euler_explicit, theta, crank_nicolson, rk2, rk3 };

std::string_view to_string(SchemeKind kind);
SchemeKind scheme_kind_from_string(std::string_view name);

/// Equidistant grid of [0, T] with Q intermediate instances per step,
/// t_{n,q} = t_{n+1} - c_q h.
class TimeGrid {
 public:
  TimeGrid(double horizon, int steps, std::vector<double> abscissae);

  double horizon() const { return horizon_; }
  int steps() const { return steps_; }
  double step() const { return step_; }
  /// Q, the number of stages per step.
  int stages() const { return static_cast<int>(c_.size()) - 1; }
  /// c_q for 1 <= q <= Q+1.
  double c(int q) const { return c_.at(static_cast<std::size_t>(q - 1)); }
  const std::vector<double>& abscissae() const { return c_; }

  /// t_n = n h.
  double time(int n) const;
  /// t_{n,q} = t_{n+1} - c_q h, 0 <= n < N, 1 <= q <= Q+1.
  double instance(int n, int q) const;

 private:
  double horizon_;
  int steps_;
  double step_;
  std::vector<double> c_;
};

/// Coefficients (c, a, alpha) of one Runge-Kutta scheme for BSDEs.
///
/// The constructor only checks structure (triangularity, ordering of the
/// abscissae); the row-sum and order conditions are checked by
/// validate_order_conditions so that deliberately broken tableaux can be
/// represented and diagnosed.
class RKTableau {
 public:
  using Matrix = std::vector<std::vector<double>>;

  RKTableau(SchemeKind kind, std::vector<double> c, Matrix a, Matrix alpha);

  SchemeKind kind() const { return kind_; }
  int stages() const { return static_cast<int>(c_.size()) - 1; }
  double c(int q) const { return c_.at(static_cast<std::size_t>(q - 1)); }
  const std::vector<double>& abscissae() const { return c_; }
  double a(int q, int k) const { return a_.at(idx(q, k)); }
  double alpha(int q, int k) const { return alpha_.at(idx(q, k)); }
  bool explicit_scheme() const;

  /// Copy with a_{qk} replaced; used to build perturbed tableaux.
  RKTableau with_a(int q, int k, double value) const;
  RKTableau with_alpha(int q, int k, double value) const;

  nlohmann::json to_json() const;
  static RKTableau from_json(const nlohmann::json& j);

 private:
  std::size_t idx(int q, int k) const;
  void check_structure() const;

  SchemeKind kind_;
  std::vector<double> c_;
  std::vector<double> a_;      // (Q+1)^2, row-major
  std::vector<double> alpha_;  // (Q+1)^2, row-major
};

/// One-stage theta scheme: a21 = 1 - theta, a22 = theta, alpha21 = 1.
RKTableau theta_tableau(double theta);
RKTableau crank_nicolson_tableau();
/// Two-stage explicit scheme with alpha = a (except alpha31 = 1 when c2 = 1).
RKTableau rk2_tableau(double c2);
/// Three-stage explicit scheme; a41 from a41 + a42 + a43 = 1.
RKTableau rk3_tableau(double c2, double c3);

struct OrderReport {
  bool passed = true;
  std::vector<std::string> violations;
};

/// Checks the row-sum conditions plus the order conditions for the requested
/// order (1: theta scheme, 2: Crank-Nicolson or two-stage explicit,
/// 3: three-stage explicit) to absolute tolerance `tolerance`.
OrderReport validate_order_conditions(const RKTableau& tableau, int order, double tolerance = 1e-12);

/// max over 1 < q <= Q+1 of |a_qq| h K < 1.
bool well_posed(const RKTableau& tableau, double step, double lipschitz);

}  // namespace bsderk
