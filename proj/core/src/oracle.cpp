#include "bsderk/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>

#include <Eigen/Eigenvalues>

#include "bsderk/errors.hpp"
#include "bsderk/schemes.hpp"

namespace bsderk {

GaussHermite GaussHermite::standard_normal(int order) {
  if (order < 1) throw InvalidParameter("Gauss-Hermite order must be at least 1");
  const int n = order;
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  GaussHermite gh;
  gh.nodes = eig.eigenvalues();
  gh.weights.resize(n);
  // Orthonormal probabilists' Hermite polynomials p_0..p_n at x.
  auto eval = [n](double x, double& pn, double& pn1) {
    double prev = 0.0, cur = 1.0;
    for (int k = 0; k < n; ++k) {
      const double next = (x * cur - std::sqrt(static_cast<double>(k)) * prev) / std::sqrt(static_cast<double>(k + 1));
      prev = cur;
      cur = next;
    }
    pn = cur;
    pn1 = prev;
  };
  for (int i = 0; i < n; ++i) {
    double x = gh.nodes[i], pn = 0.0, pn1 = 0.0;
    for (int it = 0; it < 3; ++it) {
      eval(x, pn, pn1);
      x -= pn / (std::sqrt(static_cast<double>(n)) * pn1);
    }
    eval(x, pn, pn1);
    gh.nodes[i] = x;
    gh.weights[i] = 1.0 / (n * pn1 * pn1);
  }
  gh.weights /= gh.weights.sum();
  return gh;
}

CubicSpline::CubicSpline(double lo, double hi, Eigen::VectorXd values) : lo_(lo), hi_(hi), y_(std::move(values)) {
  const auto n = y_.size();
  if (n < 3) throw InvalidParameter("spline needs at least three nodes");
  if (!(hi > lo)) throw InvalidParameter("spline range must be increasing");
  dx_ = (hi - lo) / static_cast<double>(n - 1);
  m_ = Eigen::VectorXd::Zero(n);
  // Thomas algorithm for the interior second derivatives.
  const Eigen::Index k = n - 2;
  Eigen::VectorXd c(k), d(k);
  const double diag = 4.0, off = 1.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    const double rhs = 6.0 * (y_[i + 2] - 2.0 * y_[i + 1] + y_[i]) / (dx_ * dx_);
    if (i == 0) {
      c[i] = off / diag;
      d[i] = rhs / diag;
    } else {
      const double denom = diag - off * c[i - 1];
      c[i] = off / denom;
      d[i] = (rhs - off * d[i - 1]) / denom;
    }
  }
  for (Eigen::Index i = k; i-- > 0;) m_[i + 1] = d[i] - (i + 1 < k ? c[i] * m_[i + 2] : 0.0);
}

double CubicSpline::operator()(double x) const {
  if (x < lo_ || x > hi_) {
    ++clamps_;
    x = std::clamp(x, lo_, hi_);
  }
  const auto n = y_.size();
  auto i = static_cast<Eigen::Index>((x - lo_) / dx_);
  i = std::clamp<Eigen::Index>(i, 0, n - 2);
  const double a = x - (lo_ + static_cast<double>(i) * dx_);
  const double b = dx_ - a;
  return (m_[i] * b * b * b + m_[i + 1] * a * a * a) / (6.0 * dx_) + (y_[i] / dx_ - m_[i] * dx_ / 6.0) * b +
         (y_[i + 1] / dx_ - m_[i + 1] * dx_ / 6.0) * a;
}

void CubicSpline::evaluate(const Eigen::ArrayXd& x, Eigen::ArrayXd& out) const {
  out.resize(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = (*this)(x[i]);
}

namespace {

struct Kernel {
  Eigen::ArrayXd mean;     // E[v(x + mu delta + sigma sqrt(delta) xi)]
  Eigen::ArrayXd xi_mean;  // E[xi v(...)]
};

class Solver {
 public:
  Solver(const BsdeProblem& problem, const OracleConfig& config) : problem_(problem), config_(config) {
    if (problem.dim() != 1) throw InvalidParameter("the quadrature oracle is one-dimensional");
    if (problem.forward().kind() != ForwardKind::drifted_bm) {
      throw InvalidParameter("the quadrature oracle needs Gaussian (drifted BM) transitions");
    }
    if (config.nodes < 3) throw InvalidParameter("oracle needs at least three spatial nodes");
    mu_ = problem.forward().mu()(0);
    sigma_ = problem.forward().sigma()(0, 0);
    x0_ = problem.forward().x0()(0);
    const double T = problem.horizon();
    if (config.range) {
      lo_ = config.range->first;
      hi_ = config.range->second;
    } else {
      const double spread = config.width_sd * std::abs(sigma_) * std::sqrt(T);
      lo_ = x0_ + std::min(0.0, mu_ * T) - spread;
      hi_ = x0_ + std::max(0.0, mu_ * T) + spread;
    }
    if (!(hi_ > lo_) || x0_ < lo_ || x0_ > hi_) {
      throw ConvergenceFailure("initial state outside the spatial grid; widen the range");
    }
    nodes_ = Eigen::ArrayXd::LinSpaced(config.nodes, lo_, hi_);
    gh_ = GaussHermite::standard_normal(config.gh_order);
  }

  CubicSpline spline(const Eigen::ArrayXd& values) const { return CubicSpline(lo_, hi_, values.matrix()); }

  // Driver evaluated at arbitrary states through spline tables.
  template <class F>
  Kernel kernel(double delta, F&& values) const {
    Kernel k;
    const auto m = nodes_.size();
    if (delta <= 0.0) {
      k.mean = values(nodes_);
      k.xi_mean = Eigen::ArrayXd::Zero(m);
      return k;
    }
    const auto g = gh_.nodes.size();
    Eigen::ArrayXd pts(m * g);
    const double shift = mu_ * delta, scale = sigma_ * std::sqrt(delta);
    for (Eigen::Index j = 0; j < m; ++j) {
      for (Eigen::Index i = 0; i < g; ++i) pts[j * g + i] = nodes_[j] + shift + scale * gh_.nodes[i];
    }
    const Eigen::ArrayXd v = values(pts);
    k.mean.resize(m);
    k.xi_mean.resize(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      double s = 0.0, sx = 0.0;
      for (Eigen::Index i = 0; i < g; ++i) {
        const double w = gh_.weights[i] * v[j * g + i];
        s += w;
        sx += w * gh_.nodes[i];
      }
      k.mean[j] = s;
      k.xi_mean[j] = sx;
    }
    return k;
  }

  Eigen::ArrayXd driver(double t, const Eigen::ArrayXd& x, const Eigen::ArrayXd& y, const Eigen::ArrayXd& z) const {
    if (problem_.zero_driver()) return Eigen::ArrayXd::Zero(x.size());
    Eigen::ArrayXd f;
    problem_.driver(t, x.matrix().transpose(), y, z.matrix().transpose(), f, nullptr, nullptr);
    return f;
  }

  // y = b + c f(t, x, y, z) on the nodes.
  Eigen::ArrayXd fixed_point(double t, const Eigen::ArrayXd& b, const Eigen::ArrayXd& z, double c) const {
    Eigen::ArrayXd y = b;
    if (c == 0.0) return y;
    for (int it = 0; it < config_.max_iterations; ++it) {
      const Eigen::ArrayXd next = b + c * driver(t, nodes_, y, z);
      const double change = (next - y).abs().maxCoeff();
      y = next;
      if (!std::isfinite(change)) break;
      if (change <= config_.fixed_point_tol) return y;
    }
    throw ConvergenceFailure("implicit stage fixed point did not converge; the step is too large for the driver");
  }

  const Eigen::ArrayXd& nodes() const { return nodes_; }
  double x0() const { return x0_; }
  double mu() const { return mu_; }
  double sigma() const { return sigma_; }

 private:
  const BsdeProblem& problem_;
  const OracleConfig& config_;
  double mu_ = 0.0, sigma_ = 1.0, x0_ = 0.0, lo_ = 0.0, hi_ = 1.0;
  Eigen::ArrayXd nodes_;
  GaussHermite gh_;
};

struct StageValues {
  CubicSpline y;
  CubicSpline z;
};

OracleResult finish(const BsdeProblem& problem, const Solver& s, const CubicSpline& y0, OracleTables tables,
                    std::int64_t clamps) {
  OracleResult r;
  r.y0 = y0(s.x0());
  r.exact = problem.exact_y0();
  r.abs_error = r.exact ? std::abs(r.y0 - *r.exact) : std::numeric_limits<double>::quiet_NaN();
  r.clamps = clamps;
  r.tables = std::move(tables);
  return r;
}

OracleTables terminal_tables(const BsdeProblem& problem, const Solver& s, int steps, Eigen::ArrayXd& y,
                             Eigen::ArrayXd& z) {
  OracleTables tables;
  tables.nodes = s.nodes().matrix();
  tables.y.resize(static_cast<std::size_t>(steps + 1));
  tables.z.resize(static_cast<std::size_t>(steps + 1));
  Eigen::MatrixXd zt;
  problem.terminal_pair(s.nodes().matrix().transpose(), y, zt);
  z = zt.row(0).transpose().array();
  tables.y[static_cast<std::size_t>(steps)] = y.matrix();
  tables.z[static_cast<std::size_t>(steps)] = z.matrix();
  return tables;
}

}  // namespace

OracleResult quadrature_solve(const BsdeProblem& problem, const RKTableau& tab, int steps, const OracleConfig& config) {
  if (steps < 1) throw InvalidParameter("number of steps must be at least 1");
  const Solver s(problem, config);
  const TimeGrid grid(problem.horizon(), steps, tab.abscissae());
  const int Q = tab.stages();
  const double h = grid.step();
  const std::vector<bool> needs_a = config.needs_a.empty() ? stage_needs_a(tab) : config.needs_a;
  if (static_cast<int>(needs_a.size()) != Q + 1) throw InvalidParameter("needs_a must have Q+1 entries");

  Eigen::ArrayXd y, z;
  OracleTables tables = terminal_tables(problem, s, steps, y, z);
  std::int64_t clamps = 0;
  std::vector<StageValues> stage;
  stage.reserve(static_cast<std::size_t>(Q + 1));
  for (int n = steps - 1; n >= 0; --n) {
    stage.clear();
    stage.push_back({s.spline(y), s.spline(z)});
    for (int q = 2; q <= Q + 1; ++q) {
      const bool with_a = needs_a[static_cast<std::size_t>(q - 1)];
      const double cq = tab.c(q);
      const auto& next = stage[0];
      const Kernel ky = s.kernel(cq * h, [&](const Eigen::ArrayXd& p) {
        Eigen::ArrayXd v;
        next.y.evaluate(p, v);
        return v;
      });
      Eigen::ArrayXd b = ky.mean;
      Eigen::ArrayXd zq = ky.xi_mean / std::sqrt(cq * h);
      for (int k = 1; k < q; ++k) {
        const double akq = tab.a(q, k), alq = tab.alpha(q, k);
        if (akq == 0.0 && (!with_a || alq == 0.0)) continue;
        const double delta = (cq - tab.c(k)) * h;
        const double tk = grid.instance(n, k);
        const auto& sv = stage[static_cast<std::size_t>(k - 1)];
        const Kernel kf = s.kernel(delta, [&](const Eigen::ArrayXd& p) {
          Eigen::ArrayXd yv, zv;
          sv.y.evaluate(p, yv);
          sv.z.evaluate(p, zv);
          return s.driver(tk, p, yv, zv);
        });
        b += h * akq * kf.mean;
        if (delta <= 0.0) continue;
        if (with_a) {
          zq += h * alq * kf.xi_mean / std::sqrt(delta);
        } else {
          zq += h * akq * std::sqrt(delta) * kf.xi_mean / (cq * h);
        }
      }
      const Eigen::ArrayXd yq = s.fixed_point(grid.instance(n, q), b, zq, h * tab.a(q, q));
      stage.push_back({s.spline(yq), s.spline(zq)});
      if (q == Q + 1) {
        y = yq;
        z = zq;
      }
    }
    for (const auto& sv : stage) clamps += sv.y.clamps() + sv.z.clamps();
    tables.y[static_cast<std::size_t>(n)] = y.matrix();
    tables.z[static_cast<std::size_t>(n)] = z.matrix();
  }
  return finish(problem, s, s.spline(y), std::move(tables), clamps);
}

OracleResult implicit_euler_reference(const BsdeProblem& problem, int steps, const OracleConfig& config) {
  if (steps < 1) throw InvalidParameter("number of steps must be at least 1");
  const Solver s(problem, config);
  const double h = problem.horizon() / steps;
  Eigen::ArrayXd y, z;
  OracleTables tables = terminal_tables(problem, s, steps, y, z);
  std::int64_t clamps = 0;
  for (int n = steps - 1; n >= 0; --n) {
    const CubicSpline ys = s.spline(y);
    const Kernel k = s.kernel(h, [&](const Eigen::ArrayXd& p) {
      Eigen::ArrayXd v;
      ys.evaluate(p, v);
      return v;
    });
    clamps += ys.clamps();
    z = k.xi_mean / std::sqrt(h);
    y = s.fixed_point(n * h, k.mean, z, h);
    tables.y[static_cast<std::size_t>(n)] = y.matrix();
    tables.z[static_cast<std::size_t>(n)] = z.matrix();
  }
  return finish(problem, s, s.spline(y), std::move(tables), clamps);
}

OrderResult empirical_order(const BsdeProblem& problem, const RKTableau& tableau, const std::vector<int>& steps,
                            const OracleConfig& config, double floor, const std::string& scheme) {
  if (steps.size() < 3) throw InvalidParameter("empirical order needs at least three step counts");
  if (!problem.exact_y0()) throw InvalidParameter("empirical order needs an exact Y0");
  OrderResult r;
  r.scheme = scheme.empty() ? std::string(to_string(tableau.kind())) : scheme;
  r.steps = steps;
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto res = quadrature_solve(problem, tableau, steps[i], config);
    r.y0.push_back(res.y0);
    r.errors.push_back(res.abs_error);
    const bool used = res.abs_error > floor;
    r.used.push_back(used);
    if (used) {
      xs.push_back(steps[i]);
      ys.push_back(res.abs_error);
    }
    if (i == 0) {
      r.running_slopes.push_back(std::numeric_limits<double>::quiet_NaN());
    } else {
      r.running_slopes.push_back(std::log2(r.errors[i - 1] / r.errors[i]) /
                                 std::log2(static_cast<double>(steps[i]) / steps[i - 1]));
    }
  }
  r.slope = xs.size() >= 2 ? loglog_slope(xs, ys) : std::numeric_limits<double>::quiet_NaN();
  return r;
}

void write_order_csv(std::ostream& out, const std::vector<OrderResult>& results, bool header) {
  if (header) out << "scheme,N,y0,abs_error,slope_running\n";
  out << std::setprecision(17);
  for (const auto& r : results) {
    for (std::size_t i = 0; i < r.steps.size(); ++i) {
      out << r.scheme << ',' << r.steps[i] << ',' << r.y0[i] << ',' << r.errors[i] << ',';
      if (std::isfinite(r.running_slopes[i])) out << r.running_slopes[i];
      out << '\n';
    }
  }
}

}  // namespace bsderk
