#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "bsderk/errors.hpp"
#include "bsderk/oracle.hpp"
#include "bsderk/schemes.hpp"
#include "support.hpp"

using namespace bsderk;
using bsderk::testing::ClosureLoss;

namespace {

// (U, V) = (u, v) constant in x.
class ConstantFunction : public StageFunction {
 public:
  ConstantFunction(double u, Eigen::VectorXd v) : u_(u), v_(std::move(v)) {}
  void evaluate(const Eigen::MatrixXd& x, Eigen::ArrayXd& u, Eigen::MatrixXd& v) const override {
    u = Eigen::ArrayXd::Constant(x.cols(), u_);
    v = v_.replicate(1, x.cols());
  }

 private:
  double u_;
  Eigen::VectorXd v_;
};

Mlp random_net(int d, int out, std::uint64_t seed) {
  Mlp net(d, d + 3, out);
  net.initialize(seed);
  Gaussian g(make_engine(seed, {0x52}));
  for (Eigen::Index i = 0; i < net.parameters().size(); ++i) net.parameters()[i] += 0.05 * g();
  return net;
}

StepBatch draw(const BsdeProblem& p, const TimeGrid& g, int n, int B, std::uint64_t seed) {
  Engine e = make_engine(seed);
  return sample_step(p.forward(), g, n, B, e);
}

// Output matrix with heads (U, V[, A]) stacked.
Eigen::MatrixXd heads(const Eigen::ArrayXd& u, const Eigen::MatrixXd& v, const Eigen::MatrixXd* a = nullptr) {
  Eigen::MatrixXd out(1 + v.rows() + (a ? a->rows() : 0), u.size());
  out.row(0) = u.matrix().transpose();
  out.middleRows(1, v.rows()) = v;
  if (a) out.bottomRows(a->rows()) = *a;
  return out;
}

SolveOptions quick_options(std::uint64_t seed) {
  SolveOptions o;
  o.schedule.batch = 256;
  o.schedule.initial_lr = 1e-2;
  o.stop_lr = 1e-4;
  o.seed = seed;
  o.normalization_samples = 2000;
  return o;
}

}  // namespace

TEST(SchemeSpec, NamesAndHeads) {
  for (const auto& name : scheme_names()) EXPECT_NO_THROW(make_scheme(name));
  EXPECT_THROW(make_scheme("heun"), InvalidParameter);

  const auto ei = make_scheme("euler-implicit");
  const auto ee = make_scheme("euler-explicit");
  EXPECT_FALSE(ei.needs_a[1]);
  EXPECT_FALSE(ee.needs_a[1]);
  EXPECT_EQ(ei.output_dim(2, 10), 11);

  const auto cn = make_scheme("cn");
  EXPECT_TRUE(cn.needs_a[1]);
  EXPECT_DOUBLE_EQ(cn.balance[1], 4.0 / 3.0);
  EXPECT_EQ(cn.output_dim(2, 10), 21);
  EXPECT_EQ(cn.cn_variant, CnVariant::control_variate);

  const auto rk2 = make_scheme("rk2");
  EXPECT_FALSE(rk2.needs_a[1]);
  EXPECT_TRUE(rk2.needs_a[2]);
  EXPECT_DOUBLE_EQ(rk2.balance[2], 25.0);

  const auto rk3 = make_scheme("rk3", {0.5, 0.3, 0.7});
  EXPECT_FALSE(rk3.needs_a[1]);
  EXPECT_TRUE(rk3.needs_a[2]);
  EXPECT_TRUE(rk3.needs_a[3]);
  EXPECT_DOUBLE_EQ(rk3.balance[2], 25.0 * 0.7);
  EXPECT_DOUBLE_EQ(rk3.balance[3], 25.0);

  SchemeOptions o;
  o.balance = 8.0;
  EXPECT_DOUBLE_EQ(make_scheme("cn", o).balance[1], 8.0);
  o.balance = -1.0;
  EXPECT_THROW(make_scheme("cn", o), InvalidParameter);
  EXPECT_DOUBLE_EQ(default_stop_lr(ei), 1e-6);
  EXPECT_DOUBLE_EQ(default_stop_lr(cn), 1e-9);
}

TEST(EulerImplicitLoss, ExactConstantFitIsZero) {
  const LinearProblem p(LinearParams{});
  const TimeGrid g(1.0, 4, {0.0, 1.0});
  const auto b = draw(p, g, 1, 100, 1);
  const ConstantFunction next(2.5, Eigen::VectorXd::Zero(1));
  const Eigen::MatrixXd out = heads(Eigen::ArrayXd::Constant(100, 2.5), Eigen::MatrixXd::Zero(1, 100));
  EXPECT_EQ(loss_euler_implicit(out, b, p, g, 1, next), 0.0);
}

TEST(EulerImplicitLoss, MartingaleRepresentationIsExact) {
  LinearParams lp;
  lp.sigma = 0.8;
  const LinearProblem p(lp);
  const TimeGrid g(1.0, 4, {0.0, 1.0});
  const auto b = draw(p, g, 2, 200, 2);
  const TerminalFunction next(p);
  const Eigen::ArrayXd u = b.x[1].row(0).transpose().array();
  const Eigen::MatrixXd out = heads(u, Eigen::MatrixXd::Constant(1, 200, 0.8));
  EXPECT_LT(loss_euler_implicit(out, b, p, g, 2, next), 1e-28);
  const double delta = 0.01;
  EXPECT_NEAR(loss_euler_implicit(heads(u + delta, Eigen::MatrixXd::Constant(1, 200, 0.8)), b, p, g, 2, next),
              delta * delta, 1e-15);
}

TEST(EulerExplicitLoss, CoincidesWithImplicitWithoutDriver) {
  const LinearProblem p(LinearParams{});
  const TimeGrid g(1.0, 4, {0.0, 1.0});
  const auto b = draw(p, g, 0, 64, 3);
  const TerminalFunction next(p);
  const Mlp net = random_net(1, 2, 4);
  EXPECT_DOUBLE_EQ(loss_euler_explicit(net, b, p, g, 0, next), loss_euler_implicit(net, b, p, g, 0, next));
}

TEST(EulerExplicitLoss, BatchInvariance) {
  const BmCosProblem p(3);
  const TimeGrid g(1.0, 4, {0.0, 1.0});
  const auto b1 = draw(p, g, 1, 30, 5), b2 = draw(p, g, 1, 70, 6);
  StepBatch all;
  for (int i = 0; i < 2; ++i) {
    Eigen::MatrixXd x(3, 100), dw(3, 100);
    x << b1.x[i], b2.x[i];
    dw << b1.dw[i], b2.dw[i];
    all.x.push_back(x);
    all.dw.push_back(dw);
  }
  const TerminalFunction next(p);
  const Mlp net = random_net(3, 4, 7);
  const double l1 = loss_euler_explicit(net, b1, p, g, 1, next), l2 = loss_euler_explicit(net, b2, p, g, 1, next);
  EXPECT_NEAR(loss_euler_explicit(net, all, p, g, 1, next), 0.3 * l1 + 0.7 * l2, 1e-12);
}

TEST(EulerExplicitLoss, OracleCandidateHasNoResidual) {
  // Linear in y with g(x) = x: the one-step scheme maps affine functions to
  // affine functions, so the oracle tables are exact up to quadrature error
  // and the martingale residual vanishes.
  LinearParams lp;
  lp.mu = 0.1;
  lp.sigma = 0.5;
  lp.alpha = 0.3;
  const LinearProblem p(lp);
  const int N = 4, n = 1;
  const TimeGrid g(1.0, N, {0.0, 1.0});
  const auto r = quadrature_solve(p, theta_tableau(0.0), N);
  const CubicSpline yn(r.tables.nodes[0], r.tables.nodes[r.tables.nodes.size() - 1], r.tables.y[n]);
  const CubicSpline zn(r.tables.nodes[0], r.tables.nodes[r.tables.nodes.size() - 1], r.tables.z[n]);
  const CubicSpline yn1(r.tables.nodes[0], r.tables.nodes[r.tables.nodes.size() - 1], r.tables.y[n + 1]);
  const CubicSpline zn1(r.tables.nodes[0], r.tables.nodes[r.tables.nodes.size() - 1], r.tables.z[n + 1]);
  class SplinePair : public StageFunction {
   public:
    SplinePair(const CubicSpline& y, const CubicSpline& z) : y_(y), z_(z) {}
    void evaluate(const Eigen::MatrixXd& x, Eigen::ArrayXd& u, Eigen::MatrixXd& v) const override {
      Eigen::ArrayXd zz;
      y_.evaluate(x.row(0).transpose().array(), u);
      z_.evaluate(x.row(0).transpose().array(), zz);
      v = zz.matrix().transpose();
    }

   private:
    const CubicSpline& y_;
    const CubicSpline& z_;
  };
  const SplinePair next(yn1, zn1), here(yn, zn);
  const auto b = draw(p, g, n, 500, 8);
  Eigen::ArrayXd u;
  Eigen::MatrixXd v;
  here.evaluate(b.x[1], u, v);
  const double at_oracle = loss_euler_explicit(heads(u, v), b, p, g, n, next);
  EXPECT_LT(at_oracle, 1e-12);
  EXPECT_GT(loss_euler_explicit(heads(u + 0.01, v), b, p, g, n, next), 0.9e-4);
}

TEST(CrankNicolsonLoss, ZeroDriverReducesToExplicitEuler) {
  const LinearProblem p(LinearParams{});
  const TimeGrid g(1.0, 4, {0.0, 1.0});
  const auto b = draw(p, g, 1, 64, 9);
  const TerminalFunction next(p);
  const Mlp euler = random_net(1, 2, 10);
  const Eigen::MatrixXd ue = euler.forward(b.x[1]);
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(1, 64);
  const Eigen::MatrixXd cn_out = heads(ue.row(0).transpose().array(), ue.bottomRows(1), &zero);
  for (auto variant : {CnVariant::plain, CnVariant::control_variate}) {
    EXPECT_DOUBLE_EQ(loss_crank_nicolson(cn_out, b, p, g, 1, next, variant, 4.0 / 3.0),
                     loss_euler_explicit(ue, b, p, g, 1, next));
  }
}

TEST(CrankNicolsonLoss, ControlVariateRemovesConstantDriverPenalty) {
  const double c = 1.7, balance = 4.0 / 3.0;
  const auto p = bsderk::testing::constant_driver_problem(2, c);
  const TimeGrid g(1.0, 4, {0.0, 1.0});
  const double h = g.step();
  const auto b = draw(*p, g, 1, 400, 11);
  const TerminalFunction next(*p);
  Eigen::ArrayXd u;
  Eigen::MatrixXd v;
  next.evaluate(b.x[1], u, v);
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(2, 400);
  // U chosen so that the data-fit residual is exactly -V dW.
  Eigen::ArrayXd phi;
  Eigen::MatrixXd psi;
  next.evaluate(b.x[0], phi, psi);
  const Eigen::ArrayXd uu = phi + h * c;
  const Eigen::MatrixXd out = heads(uu, zero, &zero);
  const double cv = loss_crank_nicolson(out, b, *p, g, 1, next, CnVariant::control_variate, balance);
  const double plain = loss_crank_nicolson(out, b, *p, g, 1, next, CnVariant::plain, balance);
  EXPECT_LT(cv, 1e-26);
  const Eigen::ArrayXd h2 = (b.dw[1] / h).array().square().colwise().sum().transpose();
  EXPECT_NEAR(plain, balance * h * (0.5 * h * c) * (0.5 * h * c) * h2.mean(), 1e-12);
}

TEST(GenericLoss, MatchesDedicatedLosses) {
  const BmCosProblem p(3);
  const TimeGrid g(1.0, 4, {0.0, 1.0});
  const auto b = draw(p, g, 1, 50, 12);
  const Mlp next_net = random_net(3, 4, 13);
  const NetworkFunction next(next_net);
  const std::vector<const StageFunction*> prior = {&next};

  const Mlp e = random_net(3, 4, 14);
  EXPECT_NEAR(loss_rk_stage(e, b, p, g, make_scheme("euler-implicit"), 1, 2, prior),
              loss_euler_implicit(e, b, p, g, 1, next), 1e-12);
  EXPECT_NEAR(loss_rk_stage(e, b, p, g, make_scheme("euler-explicit"), 1, 2, prior),
              loss_euler_explicit(e, b, p, g, 1, next), 1e-12);

  const Mlp c = random_net(3, 7, 15);
  for (auto variant : {CnVariant::plain, CnVariant::control_variate}) {
    SchemeOptions o;
    o.cn_variant = variant;
    const auto spec = make_scheme("cn", o);
    EXPECT_NEAR(loss_rk_stage(c, b, p, g, spec, 1, 2, prior),
                loss_crank_nicolson(c, b, p, g, 1, next, variant, spec.balance[1]), 1e-12);
  }
}

TEST(GenericLoss, Rk2FirstStageWithoutDriverIsRegression) {
  const LinearProblem p(LinearParams{});
  const auto spec = make_scheme("rk2");
  const TimeGrid g(1.0, 2, spec.tableau.abscissae());
  const auto b = draw(p, g, 0, 80, 16);
  const TerminalFunction next(p);
  const Mlp net = random_net(1, 2, 17);
  const Eigen::MatrixXd out = net.forward(b.x[1]);
  Eigen::ArrayXd phi;
  Eigen::MatrixXd psi;
  next.evaluate(b.x[0], phi, psi);
  const Eigen::ArrayXd r = phi - out.row(0).transpose().array() - (out.row(1).array() * b.dw[1].row(0).array()).transpose();
  EXPECT_NEAR(loss_rk_stage(net, b, p, g, spec, 0, 2, {&next}), r.square().mean(), 1e-14);
}

TEST(GenericLoss, FirstStageIsRejected) {
  const LinearProblem p(LinearParams{});
  const auto spec = make_scheme("rk2");
  const TimeGrid g(1.0, 2, spec.tableau.abscissae());
  const auto b = draw(p, g, 0, 10, 18);
  const TerminalFunction next(p);
  EXPECT_THROW(loss_rk_stage(random_net(1, 2, 1), b, p, g, spec, 0, 1, {&next}), InvalidParameter);
}

TEST(GenericLoss, ATargetVanishesForEulerAndZeroDriver) {
  const BmCosProblem p(2);
  const TimeGrid g(1.0, 4, {0.0, 1.0});
  const auto b = draw(p, g, 1, 20, 19);
  const TerminalFunction next(p);
  const auto t = build_stage_target(p, g, make_scheme("euler-explicit"), 1, 2, b, {&next});
  EXPECT_FALSE(t.has_a);
  EXPECT_EQ(t.a_target.size(), 0);

  const LinearProblem lin(LinearParams{});
  const auto spec = make_scheme("rk3", {0.5, 0.3, 0.7});
  const TimeGrid g3(1.0, 2, spec.tableau.abscissae());
  const auto b3 = draw(lin, g3, 0, 20, 20);
  const TerminalFunction tf(lin);
  const Mlp n2 = random_net(1, 2, 21);
  const NetworkFunction f2(n2);
  const auto t3 = build_stage_target(lin, g3, spec, 0, 3, b3, {&tf, &f2});
  EXPECT_TRUE(t3.has_a);
  EXPECT_TRUE(t3.a_target.isZero());
}

TEST(Losses, NonNegative) {
  const BmCosProblem p(2);
  for (const auto& name : scheme_names()) {
    const auto spec = make_scheme(name);
    const TimeGrid g(1.0, 4, spec.tableau.abscissae());
    const auto b = draw(p, g, 2, 40, 22);
    const TerminalFunction next(p);
    std::vector<std::unique_ptr<Mlp>> nets;
    std::vector<std::unique_ptr<NetworkFunction>> fns;
    std::vector<const StageFunction*> prior = {&next};
    for (int q = 2; q <= spec.stages() + 1; ++q) {
      nets.push_back(std::make_unique<Mlp>(random_net(2, spec.output_dim(q, 2), 23 + q)));
      EXPECT_GE(loss_rk_stage(*nets.back(), b, p, g, spec, 2, q, prior), 0.0) << name << q;
      fns.push_back(std::make_unique<NetworkFunction>(*nets.back()));
      prior.push_back(fns.back().get());
    }
  }
}

TEST(Losses, OutputGradientsMatchFiniteDifferences) {
  const BmCosProblem p(2);
  for (const auto& name : scheme_names()) {
    const auto spec = make_scheme(name);
    const TimeGrid g(1.0, 4, spec.tableau.abscissae());
    const auto b = draw(p, g, 1, 30, 30);
    const Mlp nn = random_net(2, spec.output_dim(spec.stages() + 1, 2), 31);
    const NetworkFunction next(nn);
    std::vector<std::unique_ptr<Mlp>> nets;
    std::vector<std::unique_ptr<NetworkFunction>> fns;
    std::vector<const StageFunction*> prior = {&next};
    for (int q = 2; q <= spec.stages() + 1; ++q) {
      const auto t = build_stage_target(p, g, spec, 1, q, b, prior);
      nets.push_back(std::make_unique<Mlp>(random_net(2, spec.output_dim(q, 2), 40 + q)));
      const ClosureLoss loss(t.x, [&](const Eigen::MatrixXd& out, Eigen::MatrixXd* grad) {
        return stage_loss(p, t, out, grad);
      });
      const auto r = bsderk::testing::check_gradient(*nets.back(), loss, 30, 50 + q);
      EXPECT_LE(r.max_relative, 1e-4) << name << " q=" << q;
      fns.push_back(std::make_unique<NetworkFunction>(*nets.back()));
      prior.push_back(fns.back().get());
    }
  }
}

TEST(BackwardSolve, ZeroDriverRecoversTerminalMean) {
  LinearParams lp;
  lp.mu = 0.2;
  lp.sigma = 0.5;
  lp.x0 = 1.0;
  const LinearProblem p(lp);
  for (const std::string name : {"euler-explicit", "cn"}) {
    const auto spec = make_scheme(name);
    const TimeGrid g(1.0, 2, spec.tableau.abscissae());
    const auto solved = backward_solve(p, spec, g, quick_options(1));
    EXPECT_NEAR(solved.y0(), 1.2, 2e-2) << name;
    EXPECT_EQ(static_cast<int>(solved.logs().size()), 2 * spec.stages());
  }
}

TEST(BackwardSolve, OneStepExplicitEulerIsRegression) {
  LinearParams lp;
  lp.mu = 0.1;
  lp.x0 = 0.3;
  lp.sigma = 0.6;
  const LinearProblem p(lp);
  const auto spec = make_scheme("euler-explicit");
  const TimeGrid g(1.0, 1, spec.tableau.abscissae());
  auto o = quick_options(2);
  o.schedule.batch = 1000;
  const auto solved = backward_solve(p, spec, g, o);
  // MC estimate of E[g(X_T)] from the terminal law.
  Engine e = make_engine(99);
  const auto s = sample_step(p.forward(), g, 0, 100000, e);
  const Eigen::ArrayXd gx = s.x[0].row(0).transpose().array();
  const double se = std::sqrt((gx - gx.mean()).square().mean() / double(gx.size()));
  EXPECT_NEAR(solved.y0(), gx.mean(), std::max(3.0 * se, 1e-2));
}

TEST(BackwardSolve, ATermStaysNullWithoutDriver) {
  LinearParams lp;
  lp.dim = 2;
  lp.mu = 0.1;
  lp.sigma = 0.5;
  const LinearProblem p(lp);
  const auto spec = make_scheme("cn");
  const TimeGrid g(1.0, 2, spec.tableau.abscissae());
  auto o = quick_options(3);
  o.schedule.batch = 1000;
  o.stop_lr.reset();
  const auto solved = backward_solve(p, spec, g, o);
  Engine e = make_engine(5);
  for (int n = 0; n < 2; ++n) {
    const auto s = sample_step(p.forward(), g, n, 2000, e);
    const Eigen::MatrixXd out = solved.network(n, 2).forward(s.x[1]);
    EXPECT_LE(out.bottomRows(2).array().square().colwise().sum().mean(), 1e-4) << n;
  }
}

TEST(BackwardSolve, TerminalClosureIsExact) {
  const BmCosProblem p(2);
  const auto spec = make_scheme("euler-explicit");
  const TimeGrid g(1.0, 1, spec.tableau.abscissae());
  auto o = quick_options(4);
  o.schedule.max_epochs = 100;
  const auto solved = backward_solve(p, spec, g, o);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(2, 5);
  Eigen::ArrayXd u, g0;
  Eigen::MatrixXd v, z0;
  solved.evaluate(1, x, u, v);
  p.terminal_pair(x, g0, z0);
  EXPECT_EQ(u.matrix(), g0.matrix());
  EXPECT_EQ(v, z0);
}

TEST(BackwardSolve, RefusesNonContractiveStep) {
  auto p = std::make_unique<bsderk::testing::CustomDriverProblem>(
      1, 1.0, 10.0,
      [](double, const Eigen::MatrixXd&, const Eigen::ArrayXd& y, const Eigen::MatrixXd& z, Eigen::ArrayXd& f,
         Eigen::ArrayXd* fy, Eigen::MatrixXd* fz) {
        f = 10.0 * y;
        if (fy) *fy = Eigen::ArrayXd::Constant(y.size(), 10.0);
        if (fz) *fz = Eigen::MatrixXd::Zero(z.rows(), z.cols());
      });
  const auto spec = make_scheme("euler-implicit");
  EXPECT_THROW(backward_solve(*p, spec, TimeGrid(1.0, 2, spec.tableau.abscissae()), quick_options(1)),
               InvalidParameter);
}

TEST(BackwardSolve, DivergenceCarriesStageCoordinates) {
  const auto p = bsderk::testing::nan_driver_problem(1);
  const auto spec = make_scheme("euler-explicit");
  try {
    backward_solve(*p, spec, TimeGrid(1.0, 3, spec.tableau.abscissae()), quick_options(1));
    FAIL() << "expected TrainingDivergence";
  } catch (const TrainingDivergence& e) {
    EXPECT_EQ(e.step(), 2);
    EXPECT_EQ(e.stage(), 2);
  }
}

TEST(BackwardSolve, DeterministicGivenSeed) {
  const BmCosProblem p(2);
  const auto spec = make_scheme("rk2");
  const TimeGrid g(1.0, 2, spec.tableau.abscissae());
  auto o = quick_options(6);
  o.schedule.max_epochs = 150;
  const double a = backward_solve(p, spec, g, o).y0();
  const double b = backward_solve(p, spec, g, o).y0();
  EXPECT_EQ(a, b);
}

TEST(SolvedBsde, SavesManifestCheckpointsAndLogs) {
  const BmCosProblem p(2);
  const auto spec = make_scheme("cn");
  const TimeGrid g(1.0, 2, spec.tableau.abscissae());
  auto o = quick_options(7);
  o.schedule.max_epochs = 100;
  const auto solved = backward_solve(p, spec, g, o);
  const auto dir = std::filesystem::temp_directory_path() / "bsderk_solved";
  std::filesystem::remove_all(dir);
  solved.save(dir.string());
  std::ifstream in(dir / "manifest.json");
  const auto m = nlohmann::json::parse(in);
  EXPECT_EQ(m.at("scheme").at("name"), "cn");
  EXPECT_TRUE(std::filesystem::exists(dir / "net_n0_q2.bin"));
  EXPECT_TRUE(std::filesystem::exists(dir / "log_n1_q2.csv"));
  const Mlp back = Mlp::load((dir / "net_n0_q2.bin").string());
  const Eigen::MatrixXd x0 = p.forward().x0();
  EXPECT_EQ(back.forward(x0)(0, 0), solved.y0());
  std::filesystem::remove_all(dir);
}
