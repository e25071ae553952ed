#include <cmath>

#include <gtest/gtest.h>

#include "bsderk/errors.hpp"
#include "bsderk/problems.hpp"

using namespace bsderk;

namespace {

// Random points near the support of the forward process.
std::vector<std::pair<double, Eigen::VectorXd>> random_points(const BsdeProblem& p, int count, std::uint64_t seed) {
  Gaussian g(make_engine(seed, {0x50}));
  std::vector<std::pair<double, Eigen::VectorXd>> out;
  for (int i = 0; i < count; ++i) {
    const double t = p.horizon() * (0.5 + 0.5 * std::tanh(g()));
    Eigen::VectorXd x = p.forward().x0();
    for (int j = 0; j < x.size(); ++j) x[j] = std::abs(x[j] + 0.5 * g());
    out.emplace_back(t, x);
  }
  return out;
}

void expect_pde_residual_small(const BsdeProblem& p) {
  for (const auto& [t, x] : random_points(p, 100, 1)) EXPECT_LT(std::abs(pde_residual(p, t, x)), 1e-8);
}

void expect_terminal_consistency(const BsdeProblem& p) {
  for (const auto& [t, x] : random_points(p, 10, 2)) {
    Eigen::ArrayXd g, u;
    Eigen::MatrixXd grad;
    p.terminal(x, g, grad);
    p.exact(p.horizon(), x, u, nullptr);
    EXPECT_NEAR(g(0), u(0), 1e-14);
    for (int i = 0; i < x.size(); ++i) {
      Eigen::VectorXd up = x, down = x;
      up[i] += 1e-6;
      down[i] -= 1e-6;
      Eigen::ArrayXd gu, gd;
      Eigen::MatrixXd unused;
      p.terminal(up, gu, unused);
      p.terminal(down, gd, unused);
      EXPECT_NEAR(grad(i, 0), (gu(0) - gd(0)) / 2e-6, 1e-6);
    }
  }
}

void expect_exact_z(const BsdeProblem& p) {
  for (const auto& [t, x] : random_points(p, 10, 3)) {
    Eigen::ArrayXd u;
    Eigen::MatrixXd z;
    p.exact(t, x, u, &z);
    const auto d = p.exact_derivatives(t, x);
    EXPECT_NEAR(u(0), d.u, 1e-14);
    const Eigen::MatrixXd expect = sigma_transpose_times(p.forward(), x, d.grad);
    EXPECT_LT((z - expect).cwiseAbs().maxCoeff(), 1e-12);
  }
}

void expect_driver_derivatives(const BsdeProblem& p) {
  for (const auto& [t, x] : random_points(p, 10, 4)) {
    Eigen::ArrayXd y(1), f, fy;
    Eigen::MatrixXd z(x.size(), 1), fz;
    y(0) = 0.3;
    for (int i = 0; i < x.size(); ++i) z(i, 0) = 0.1 * (i + 1) - 0.2;
    p.driver(t, x, y, z, f, &fy, &fz);
    Eigen::ArrayXd fu, fd;
    const double eps = 1e-6;
    p.driver(t, x, y + eps, z, fu, nullptr, nullptr);
    p.driver(t, x, y - eps, z, fd, nullptr, nullptr);
    EXPECT_NEAR(fy(0), (fu(0) - fd(0)) / (2 * eps), 1e-6);
    for (int i = 0; i < x.size(); ++i) {
      Eigen::MatrixXd zu = z, zd = z;
      zu(i, 0) += eps;
      zd(i, 0) -= eps;
      p.driver(t, x, y, zu, fu, nullptr, nullptr);
      p.driver(t, x, y, zd, fd, nullptr, nullptr);
      EXPECT_NEAR(fz(i, 0), (fu(0) - fd(0)) / (2 * eps), 1e-6);
    }
  }
}

}  // namespace

TEST(BmCos, ExactY0) {
  const BmCosProblem p;
  ASSERT_TRUE(p.exact_y0().has_value());
  EXPECT_NEAR(*p.exact_y0(), std::cos(10.0) * std::exp(0.5), 1e-15);
  EXPECT_NEAR(*p.exact_y0(), -1.383395, 1e-6);
  EXPECT_EQ(p.dim(), 10);
  EXPECT_NEAR(p.forward().mu()[0], 0.02, 1e-15);
  EXPECT_NEAR(p.forward().sigma()(0, 0), 1.0 / std::sqrt(10.0), 1e-15);
}

TEST(BmCos, PdeResidual) { expect_pde_residual_small(BmCosProblem()); }
TEST(BmCos, TerminalConsistency) { expect_terminal_consistency(BmCosProblem()); }
TEST(BmCos, ExactZ) { expect_exact_z(BmCosProblem()); }
TEST(BmCos, DriverDerivatives) { expect_driver_derivatives(BmCosProblem()); }

TEST(BmCos, ZFormula) {
  const BmCosProblem p;
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(10, 0.7);
  Eigen::ArrayXd u;
  Eigen::MatrixXd z;
  p.exact(0.25, x, u, &z);
  EXPECT_NEAR(z(3, 0), -std::sin(7.0) * std::exp(0.375) / std::sqrt(10.0), 1e-14);
}

TEST(CirCos, ExactY0) {
  const CirCosProblem p;
  EXPECT_NEAR(*p.exact_y0(), std::cos(100.0) * std::exp(0.5), 1e-14);
  EXPECT_NEAR(*p.exact_y0(), 1.421723, 1e-6);
}

TEST(CirCos, FellerHoldsAtDefaultParameters) {
  EXPECT_NO_THROW(CirCosProblem());
  const CirCosProblem p;
  EXPECT_GE(2.0 * p.forward().a() * p.forward().b(), p.forward().sigma_cir() * p.forward().sigma_cir());
  EXPECT_NEAR(2.0 * p.forward().a() * p.forward().b(), 0.12, 1e-15);
}

TEST(CirCos, PdeResidual) { expect_pde_residual_small(CirCosProblem()); }
TEST(CirCos, TerminalConsistency) { expect_terminal_consistency(CirCosProblem()); }
TEST(CirCos, ExactZ) { expect_exact_z(CirCosProblem()); }
TEST(CirCos, DriverDerivatives) { expect_driver_derivatives(CirCosProblem()); }

TEST(CirCos, DriverIgnoresZ) {
  const CirCosProblem p;
  const Eigen::MatrixXd x = Eigen::MatrixXd::Constant(10, 2, 9.0);
  Eigen::ArrayXd y = Eigen::ArrayXd::Constant(2, 0.4), f1, f2;
  p.driver(0.3, x, y, Eigen::MatrixXd::Zero(10, 2), f1, nullptr, nullptr);
  p.driver(0.3, x, y, Eigen::MatrixXd::Constant(10, 2, 5.0), f2, nullptr, nullptr);
  EXPECT_EQ(f1(0), f2(0));
}

TEST(Linear, ZeroDriverIsShiftedMartingale) {
  LinearParams lp;
  lp.mu = 0.3;
  lp.x0 = 0.5;
  const LinearProblem p(lp);
  EXPECT_TRUE(p.zero_driver());
  Eigen::MatrixXd x(1, 1);
  x << 1.7;
  Eigen::ArrayXd u;
  p.exact(0.4, x, u, nullptr);
  EXPECT_NEAR(u(0), 1.7 + 0.3 * 0.6, 1e-15);
  EXPECT_NEAR(*p.exact_y0(), 0.5 + 0.3, 1e-15);
}

TEST(Linear, LinearInYGrowsExponentially) {
  LinearParams lp;
  lp.mu = 0.2;
  lp.alpha = 0.5;
  const LinearProblem p(lp);
  Eigen::MatrixXd x(1, 1);
  x << 0.3;
  Eigen::ArrayXd u;
  Eigen::MatrixXd z;
  p.exact(0.0, x, u, &z);
  EXPECT_NEAR(u(0), std::exp(0.5) * (0.3 + 0.2), 1e-14);
  EXPECT_NEAR(z(0, 0), lp.sigma * std::exp(0.5), 1e-14);
}

TEST(Linear, PdeResidualAndDerivatives) {
  LinearParams lp;
  lp.dim = 3;
  lp.mu = 0.1;
  lp.sigma = 0.7;
  lp.alpha = -0.4;
  lp.beta = 0.25;
  lp.x0 = 1.0;
  const LinearProblem p(lp);
  expect_pde_residual_small(p);
  expect_terminal_consistency(p);
  expect_exact_z(p);
  expect_driver_derivatives(p);
  EXPECT_TRUE(p.zero_driver() == false);
}

TEST(Registry, BuiltInNames) {
  for (const std::string name : {"bm-cos", "cir-cos", "linear-1d"}) {
    const auto p = make_problem(name);
    EXPECT_EQ(p->name(), name);
  }
  EXPECT_THROW(make_problem("heat"), InvalidParameter);
}

TEST(Registry, CustomProblemPlugIn) {
  register_problem("bm-cos-3d", [] { return std::make_unique<BmCosProblem>(3); });
  const auto p = make_problem("bm-cos-3d");
  EXPECT_EQ(p->dim(), 3);
  const auto names = problem_names();
  EXPECT_NE(std::find(names.begin(), names.end(), "bm-cos-3d"), names.end());
}

TEST(Lipschitz, BoundsDriverSlopeAlongSolution) {
  const BmCosProblem p;
  for (const auto& [t, x] : random_points(p, 200, 5)) {
    Eigen::ArrayXd u, f, fy;
    Eigen::MatrixXd z, fz;
    p.exact(t, x, u, &z);
    p.driver(t, x, u, z, f, &fy, &fz);
    EXPECT_LE(std::abs(fy(0)), p.lipschitz() * (1 + 1e-12));
  }
}
