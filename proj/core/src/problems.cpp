#include "bsderk/problems.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "bsderk/errors.hpp"

namespace bsderk {

namespace {

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, ProblemFactory>& registry() {
  static std::map<std::string, ProblemFactory> r = {
      {"bm-cos", [] { return bm_cos_problem(); }},
      {"cir-cos", [] { return cir_cos_problem(); }},
      {"linear-1d", [] { return linear_1d_problem(); }},
  };
  return r;
}

Eigen::ArrayXd column_sums(const Eigen::MatrixXd& x) { return x.colwise().sum().transpose().array(); }

}  // namespace

void BsdeProblem::exact(double, const Eigen::MatrixXd&, Eigen::ArrayXd&, Eigen::MatrixXd*) const {
  throw InvalidParameter("problem '" + name() + "' has no exact solution");
}

PointDerivatives BsdeProblem::exact_derivatives(double, const Eigen::VectorXd&) const {
  throw InvalidParameter("problem '" + name() + "' has no exact solution");
}

void BsdeProblem::terminal_pair(const Eigen::MatrixXd& x, Eigen::ArrayXd& g, Eigen::MatrixXd& z) const {
  Eigen::MatrixXd grad;
  terminal(x, g, grad);
  z = sigma_transpose_times(forward(), x, grad);
}

Eigen::MatrixXd sigma_transpose_times(const ForwardModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& v) {
  if (model.kind() == ForwardKind::drifted_bm) return model.sigma().transpose() * v;
  return (model.sigma_cir() * x.array().max(0.0).sqrt() * v.array()).matrix();
}

double pde_residual(const BsdeProblem& problem, double t, const Eigen::VectorXd& x) {
  const auto d = problem.exact_derivatives(t, x);
  const Eigen::VectorXd mu = problem.forward().drift_at(x);
  const Eigen::MatrixXd sig = problem.forward().diffusion_at(x);
  const double generator = mu.dot(d.grad) + 0.5 * (sig * sig.transpose() * d.hess).trace();
  Eigen::ArrayXd y(1), f;
  y(0) = d.u;
  const Eigen::MatrixXd z = sig.transpose() * d.grad;
  problem.driver(t, x, y, z, f, nullptr, nullptr);
  return d.ut + generator + f(0);
}

BmCosProblem::BmCosProblem(int dim, double horizon, double x0)
    : model_(ForwardModel::drifted_bm(Eigen::VectorXd::Constant(dim, 0.2 / dim),
                                      Eigen::MatrixXd::Identity(dim, dim) / std::sqrt(static_cast<double>(dim)),
                                      Eigen::VectorXd::Constant(dim, x0))),
      T_(horizon) {
  if (!(horizon > 0.0)) throw InvalidParameter("horizon must be positive");
}

void BmCosProblem::driver(double t, const Eigen::MatrixXd& x, const Eigen::ArrayXd& y, const Eigen::MatrixXd& z,
                          Eigen::ArrayXd& f, Eigen::ArrayXd* fy, Eigen::MatrixXd* fz) const {
  const double d = dim();
  const double e = std::exp(0.5 * (T_ - t));
  const Eigen::ArrayXd s = column_sums(x);
  const Eigen::ArrayXd zs = column_sums(z);
  const Eigen::ArrayXd sn = s.sin(), cs = s.cos();
  const Eigen::ArrayXd sc = sn * cs * e * e;
  const Eigen::ArrayXd yz = y * zs;
  f = (cs + 0.2 * sn) * e - 0.5 * sc.square() + yz.square() / (2.0 * d);
  if (fy) *fy = yz * zs / d;
  if (fz) {
    const Eigen::RowVectorXd col = (yz * y / d).matrix().transpose();
    *fz = col.replicate(x.rows(), 1);
  }
}

void BmCosProblem::terminal(const Eigen::MatrixXd& x, Eigen::ArrayXd& g, Eigen::MatrixXd& grad) const {
  const Eigen::ArrayXd s = column_sums(x);
  g = s.cos();
  grad = (-s.sin()).matrix().transpose().replicate(x.rows(), 1);
}

void BmCosProblem::exact(double t, const Eigen::MatrixXd& x, Eigen::ArrayXd& u, Eigen::MatrixXd* z) const {
  const double e = std::exp(0.5 * (T_ - t));
  const Eigen::ArrayXd s = column_sums(x);
  u = s.cos() * e;
  if (z) *z = (-s.sin() * e / std::sqrt(static_cast<double>(dim()))).matrix().transpose().replicate(x.rows(), 1);
}

PointDerivatives BmCosProblem::exact_derivatives(double t, const Eigen::VectorXd& x) const {
  const double e = std::exp(0.5 * (T_ - t));
  const double s = x.sum();
  const auto d = x.size();
  PointDerivatives out;
  out.u = std::cos(s) * e;
  out.ut = -0.5 * out.u;
  out.grad = Eigen::VectorXd::Constant(d, -std::sin(s) * e);
  out.hess = Eigen::MatrixXd::Constant(d, d, -std::cos(s) * e);
  return out;
}

std::optional<double> BmCosProblem::exact_y0() const {
  return std::cos(model_.x0().sum()) * std::exp(0.5 * T_);
}

// sup |f_y| = |cos s| sin^2 s e^{3(T-t)/2} along the solution.
double BmCosProblem::lipschitz() const { return 2.0 / (3.0 * std::sqrt(3.0)) * std::exp(1.5 * T_); }

CirCosProblem::CirCosProblem(int dim, double horizon)
    : model_(ForwardModel::cir_nv(dim, 1.0 / (5.0 * dim), 3.0, 1.0 / std::sqrt(static_cast<double>(dim)), 10.0)),
      T_(horizon) {
  if (!(horizon > 0.0)) throw InvalidParameter("horizon must be positive");
}

void CirCosProblem::driver(double t, const Eigen::MatrixXd& x, const Eigen::ArrayXd& y, const Eigen::MatrixXd&,
                           Eigen::ArrayXd& f, Eigen::ArrayXd* fy, Eigen::MatrixXd* fz) const {
  const double d = dim();
  const double e = std::exp(0.5 * (T_ - t));
  const Eigen::ArrayXd s = column_sums(x);
  const Eigen::ArrayXd sn = s.sin(), cs = s.cos();
  const Eigen::ArrayXd ft = (0.5 * cs * (1.0 + s / d) + sn * (0.6 - s / (5.0 * d))) * e;
  const Eigen::ArrayXd w = 0.2 * (sn * e).square();
  f = ft + w * (y.square() - cs.square() * e * e);
  if (fy) *fy = 2.0 * w * y;
  if (fz) *fz = Eigen::MatrixXd::Zero(x.rows(), x.cols());
}

void CirCosProblem::terminal(const Eigen::MatrixXd& x, Eigen::ArrayXd& g, Eigen::MatrixXd& grad) const {
  const Eigen::ArrayXd s = column_sums(x);
  g = s.cos();
  grad = (-s.sin()).matrix().transpose().replicate(x.rows(), 1);
}

void CirCosProblem::exact(double t, const Eigen::MatrixXd& x, Eigen::ArrayXd& u, Eigen::MatrixXd* z) const {
  const double e = std::exp(0.5 * (T_ - t));
  const Eigen::ArrayXd s = column_sums(x);
  u = s.cos() * e;
  if (z) {
    const Eigen::MatrixXd grad = (-s.sin() * e).matrix().transpose().replicate(x.rows(), 1);
    *z = sigma_transpose_times(model_, x, grad);
  }
}

PointDerivatives CirCosProblem::exact_derivatives(double t, const Eigen::VectorXd& x) const {
  const double e = std::exp(0.5 * (T_ - t));
  const double s = x.sum();
  const auto d = x.size();
  PointDerivatives out;
  out.u = std::cos(s) * e;
  out.ut = -0.5 * out.u;
  out.grad = Eigen::VectorXd::Constant(d, -std::sin(s) * e);
  out.hess = Eigen::MatrixXd::Constant(d, d, -std::cos(s) * e);
  return out;
}

std::optional<double> CirCosProblem::exact_y0() const {
  return std::cos(model_.x0().sum()) * std::exp(0.5 * T_);
}

double CirCosProblem::lipschitz() const { return 0.8 / (3.0 * std::sqrt(3.0)) * std::exp(1.5 * T_); }

LinearProblem::LinearProblem(LinearParams p)
    : p_(p),
      model_(ForwardModel::drifted_bm(Eigen::VectorXd::Constant(p.dim, p.mu),
                                      Eigen::MatrixXd::Identity(p.dim, p.dim) * p.sigma,
                                      Eigen::VectorXd::Constant(p.dim, p.x0))) {
  if (!(p.horizon > 0.0)) throw InvalidParameter("horizon must be positive");
}

void LinearProblem::driver(double, const Eigen::MatrixXd& x, const Eigen::ArrayXd& y, const Eigen::MatrixXd& z,
                           Eigen::ArrayXd& f, Eigen::ArrayXd* fy, Eigen::MatrixXd* fz) const {
  f = p_.alpha * y + p_.beta * column_sums(z);
  if (fy) *fy = Eigen::ArrayXd::Constant(y.size(), p_.alpha);
  if (fz) *fz = Eigen::MatrixXd::Constant(x.rows(), x.cols(), p_.beta);
}

void LinearProblem::terminal(const Eigen::MatrixXd& x, Eigen::ArrayXd& g, Eigen::MatrixXd& grad) const {
  g = column_sums(x);
  grad = Eigen::MatrixXd::Ones(x.rows(), x.cols());
}

void LinearProblem::exact(double t, const Eigen::MatrixXd& x, Eigen::ArrayXd& u, Eigen::MatrixXd* z) const {
  const double tau = p_.horizon - t;
  const double e = std::exp(p_.alpha * tau);
  u = e * (column_sums(x) + p_.dim * (p_.mu + p_.beta * p_.sigma) * tau);
  if (z) *z = Eigen::MatrixXd::Constant(x.rows(), x.cols(), p_.sigma * e);
}

PointDerivatives LinearProblem::exact_derivatives(double t, const Eigen::VectorXd& x) const {
  const double tau = p_.horizon - t;
  const double e = std::exp(p_.alpha * tau);
  const double drift = p_.dim * (p_.mu + p_.beta * p_.sigma);
  PointDerivatives out;
  out.u = e * (x.sum() + drift * tau);
  out.ut = -p_.alpha * out.u - e * drift;
  out.grad = Eigen::VectorXd::Constant(x.size(), e);
  out.hess = Eigen::MatrixXd::Zero(x.size(), x.size());
  return out;
}

std::optional<double> LinearProblem::exact_y0() const {
  const double e = std::exp(p_.alpha * p_.horizon);
  return e * (p_.dim * p_.x0 + p_.dim * (p_.mu + p_.beta * p_.sigma) * p_.horizon);
}

std::unique_ptr<BsdeProblem> bm_cos_problem() { return std::make_unique<BmCosProblem>(); }
std::unique_ptr<BsdeProblem> cir_cos_problem() { return std::make_unique<CirCosProblem>(); }
std::unique_ptr<BsdeProblem> linear_1d_problem(LinearParams p) { return std::make_unique<LinearProblem>(p); }

void register_problem(const std::string& name, ProblemFactory factory) {
  if (name.empty() || !factory) throw InvalidParameter("problem registration needs a name and a factory");
  std::lock_guard lock(registry_mutex());
  registry()[name] = std::move(factory);
}

std::unique_ptr<BsdeProblem> make_problem(const std::string& name) {
  ProblemFactory factory;
  {
    std::lock_guard lock(registry_mutex());
    auto it = registry().find(name);
    if (it == registry().end()) throw InvalidParameter("unknown problem '" + name + "'");
    factory = it->second;
  }
  return factory();
}

std::vector<std::string> problem_names() {
  std::lock_guard lock(registry_mutex());
  std::vector<std::string> out;
  for (const auto& [k, v] : registry()) out.push_back(k);
  return out;
}

}  // namespace bsderk
