#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "bsderk/errors.hpp"
#include "bsderk/oracle.hpp"
#include "support.hpp"

using namespace bsderk;

namespace {

double normal_moment(int k) {
  if (k % 2) return 0.0;
  double m = 1.0;
  for (int j = k - 1; j > 1; j -= 2) m *= j;
  return m;
}

std::unique_ptr<bsderk::testing::CustomDriverProblem> scalar_problem(double alpha, double lipschitz) {
  return std::make_unique<bsderk::testing::CustomDriverProblem>(
      1, 1.0, lipschitz,
      [alpha](double, const Eigen::MatrixXd& x, const Eigen::ArrayXd& y, const Eigen::MatrixXd&, Eigen::ArrayXd& f,
              Eigen::ArrayXd* fy, Eigen::MatrixXd* fz) {
        f = alpha * y;
        if (fy) *fy = Eigen::ArrayXd::Constant(y.size(), alpha);
        if (fz) *fz = Eigen::MatrixXd::Zero(x.rows(), x.cols());
      });
}

}  // namespace

TEST(GaussHermite, ExactForPolynomials) {
  const auto gh = GaussHermite::standard_normal(10);
  EXPECT_NEAR(gh.weights.sum(), 1.0, 1e-14);
  for (int k = 0; k <= 19; ++k) {
    const double m = (gh.weights.array() * gh.nodes.array().pow(k)).sum();
    // Scale of the terms summed: E|xi|^k is bounded by the next even moment.
    EXPECT_NEAR(m, normal_moment(k), 1e-12 * normal_moment(k + k % 2)) << k;
  }
}

TEST(CubicSpline, ReproducesCubicsInside) {
  Eigen::VectorXd v(201);
  for (int i = 0; i <= 200; ++i) {
    const double x = -1.0 + 0.01 * i;
    v[i] = std::sin(x);
  }
  const CubicSpline s(-1.0, 1.0, v);
  EXPECT_NEAR(s(0.123), std::sin(0.123), 1e-8);
  EXPECT_NEAR(s(-1.0), std::sin(-1.0), 1e-15);
  EXPECT_EQ(s.clamps(), 0);
}

TEST(CubicSpline, LinearDataIsExact) {
  Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(11, 2.0, 7.0);
  const CubicSpline s(0.0, 1.0, v);
  EXPECT_NEAR(s(0.37), 2.0 + 5.0 * 0.37, 1e-13);
}

TEST(CubicSpline, ClampsOutsideTheGrid) {
  const CubicSpline s(0.0, 1.0, Eigen::VectorXd::LinSpaced(5, 1.0, 3.0));
  EXPECT_EQ(s(2.0), 3.0);
  EXPECT_EQ(s(-1.0), 1.0);
  EXPECT_EQ(s.clamps(), 2);
}

TEST(Quadrature, ZeroDriverGivesTerminalMean) {
  LinearParams lp;
  lp.mu = 0.25;
  lp.x0 = 0.4;
  const LinearProblem p(lp);
  for (const auto& tab : {theta_tableau(1.0), crank_nicolson_tableau(), rk2_tableau(0.5), rk3_tableau(0.5, 1.0)}) {
    const auto r = quadrature_solve(p, tab, 4);
    EXPECT_NEAR(r.y0, 0.65, 1e-10);
  }
}

TEST(Quadrature, ExplicitEulerOneStepDoublesLinearInY) {
  const auto p = scalar_problem(1.0, 1.0);
  // g = x with x0 = 0.5 and drift 0.1: E g(X_1) = 0.6 and y0 = (1 + h) * 0.6.
  const auto r = quadrature_solve(*p, theta_tableau(0.0), 1);
  EXPECT_NEAR(r.y0, 2.0 * 0.6, 1e-10);
}

TEST(Quadrature, ThetaOneMatchesDirectImplicitEuler) {
  const BmCosProblem p(1, 1.0, 10.0);
  for (int N : {2, 5, 8}) {
    const auto a = quadrature_solve(p, theta_tableau(1.0), N);
    const auto b = implicit_euler_reference(p, N);
    EXPECT_NEAR(a.y0, b.y0, 1e-12) << N;
  }
}

TEST(Quadrature, RefinementIsConsistent) {
  const BmCosProblem p(1, 1.0, 10.0);
  OracleConfig fine;
  fine.nodes = 800;
  fine.gh_order = 48;
  const auto a = quadrature_solve(p, rk3_tableau(0.5, 1.0), 8);
  const auto b = quadrature_solve(p, rk3_tableau(0.5, 1.0), 8, fine);
  EXPECT_NEAR(a.y0, b.y0, 1e-8);
  EXPECT_LT(a.abs_error, 1e-2);
}

TEST(Quadrature, RejectsStartOutsideRange) {
  const BmCosProblem p(1, 1.0, 10.0);
  OracleConfig c;
  c.range = std::make_pair(0.0, 0.5);
  EXPECT_THROW(quadrature_solve(p, theta_tableau(1.0), 4, c), ConvergenceFailure);
}

TEST(Quadrature, FixedPointFailureIsReported) {
  const auto p = scalar_problem(40.0, 0.0);
  OracleConfig c;
  c.max_iterations = 50;
  EXPECT_THROW(quadrature_solve(*p, theta_tableau(1.0), 2, c), ConvergenceFailure);
}

TEST(Quadrature, RejectsMultidimensionalProblems) {
  EXPECT_THROW(quadrature_solve(BmCosProblem(2), theta_tableau(1.0), 2), InvalidParameter);
}

TEST(EmpiricalOrder, MatchesSchemeOrders) {
  const BmCosProblem p(1, 1.0, 10.0);
  const std::vector<int> steps = {4, 8, 16, 32, 64};
  const auto ei = empirical_order(p, theta_tableau(1.0), steps);
  const auto cn = empirical_order(p, crank_nicolson_tableau(), steps);
  const auto rk3 = empirical_order(p, rk3_tableau(0.5, 1.0), steps);
  EXPECT_GT(ei.slope, 0.8);
  EXPECT_LT(ei.slope, 1.2);
  EXPECT_GT(cn.slope, 1.7);
  EXPECT_LT(cn.slope, 2.3);
  EXPECT_GT(rk3.slope, 2.5);
  EXPECT_LT(rk3.slope, 3.5);
  EXPECT_TRUE(std::isnan(cn.running_slopes[0]));
  EXPECT_EQ(cn.errors.size(), steps.size());
}

TEST(EmpiricalOrder, NeedsThreeStepCounts) {
  const BmCosProblem p(1, 1.0, 10.0);
  EXPECT_THROW(empirical_order(p, theta_tableau(1.0), {4, 8}), InvalidParameter);
}

TEST(EmpiricalOrder, CsvColumns) {
  const BmCosProblem p(1, 1.0, 10.0);
  const auto r = empirical_order(p, theta_tableau(1.0), {2, 4, 8}, {}, 1e-11, "euler-implicit");
  std::ostringstream out;
  write_order_csv(out, {r});
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "scheme,N,y0,abs_error,slope_running");
  int rows = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(line.rfind("euler-implicit,", 0), 0u);
    ++rows;
  }
  EXPECT_EQ(rows, 3);
}
