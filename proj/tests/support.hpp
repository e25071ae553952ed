#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <utility>

#include <Eigen/Dense>

#include "bsderk/neuralnet.hpp"
#include "bsderk/problems.hpp"
#include "bsderk/random.hpp"

namespace bsderk::testing {

/// Drifted BM problem with a user supplied driver and g = sum x.
class CustomDriverProblem : public BsdeProblem {
 public:
  using Driver = std::function<void(double, const Eigen::MatrixXd&, const Eigen::ArrayXd&, const Eigen::MatrixXd&,
                                    Eigen::ArrayXd&, Eigen::ArrayXd*, Eigen::MatrixXd*)>;

  CustomDriverProblem(int dim, double horizon, double lipschitz, Driver f)
      : model_(ForwardModel::drifted_bm(Eigen::VectorXd::Constant(dim, 0.1),
                                        Eigen::MatrixXd::Identity(dim, dim) / std::sqrt(double(dim)),
                                        Eigen::VectorXd::Constant(dim, 0.5))),
        T_(horizon),
        K_(lipschitz),
        f_(std::move(f)) {}

  std::string name() const override { return "custom"; }
  const ForwardModel& forward() const override { return model_; }
  double horizon() const override { return T_; }
  void driver(double t, const Eigen::MatrixXd& x, const Eigen::ArrayXd& y, const Eigen::MatrixXd& z,
              Eigen::ArrayXd& f, Eigen::ArrayXd* fy, Eigen::MatrixXd* fz) const override {
    f_(t, x, y, z, f, fy, fz);
  }
  void terminal(const Eigen::MatrixXd& x, Eigen::ArrayXd& g, Eigen::MatrixXd& grad) const override {
    g = x.colwise().sum().transpose().array();
    grad = Eigen::MatrixXd::Ones(x.rows(), x.cols());
  }
  double lipschitz() const override { return K_; }

 private:
  ForwardModel model_;
  double T_;
  double K_;
  Driver f_;
};

inline std::unique_ptr<CustomDriverProblem> constant_driver_problem(int dim, double value) {
  return std::make_unique<CustomDriverProblem>(
      dim, 1.0, 0.0,
      [value](double, const Eigen::MatrixXd& x, const Eigen::ArrayXd&, const Eigen::MatrixXd&, Eigen::ArrayXd& f,
              Eigen::ArrayXd* fy, Eigen::MatrixXd* fz) {
        f = Eigen::ArrayXd::Constant(x.cols(), value);
        if (fy) *fy = Eigen::ArrayXd::Zero(x.cols());
        if (fz) *fz = Eigen::MatrixXd::Zero(x.rows(), x.cols());
      });
}

inline std::unique_ptr<CustomDriverProblem> nan_driver_problem(int dim) {
  return std::make_unique<CustomDriverProblem>(
      dim, 1.0, 0.0,
      [](double, const Eigen::MatrixXd& x, const Eigen::ArrayXd& y, const Eigen::MatrixXd&, Eigen::ArrayXd& f,
         Eigen::ArrayXd* fy, Eigen::MatrixXd* fz) {
        f = Eigen::ArrayXd::Constant(x.cols(), std::numeric_limits<double>::quiet_NaN()) + 0.0 * y;
        if (fy) *fy = Eigen::ArrayXd::Zero(x.cols());
        if (fz) *fz = Eigen::MatrixXd::Zero(x.rows(), x.cols());
      });
}

/// LossBatch from a closure over the network outputs.
class ClosureLoss : public LossBatch {
 public:
  using Fn = std::function<double(const Eigen::MatrixXd&, Eigen::MatrixXd*)>;
  ClosureLoss(Eigen::MatrixXd inputs, Fn fn) : inputs_(std::move(inputs)), fn_(std::move(fn)) {}
  const Eigen::MatrixXd& inputs() const override { return inputs_; }
  double loss(const Eigen::MatrixXd& output, Eigen::MatrixXd* grad) const override { return fn_(output, grad); }

 private:
  Eigen::MatrixXd inputs_;
  Fn fn_;
};

struct GradientCheck {
  double max_relative = 0.0;
  int checked = 0;
};

/// Central differences with step `step` on `count` random parameters.
/// Relative error |ad - fd| / max(|ad|, |fd|, floor).
inline GradientCheck check_gradient(Mlp net, const LossBatch& batch, int count, std::uint64_t seed,
                                    double step = 1e-5, double floor = 1e-6) {
  const LossAndGradient ad = compute_gradient(net, batch);
  Engine rng = make_engine(seed, {0x4644});
  GradientCheck out;
  for (int i = 0; i < count; ++i) {
    const auto j = static_cast<Eigen::Index>(rng() % net.size());
    const double saved = net.parameters()[j];
    net.parameters()[j] = saved + step;
    const double up = evaluate_loss(net, batch);
    net.parameters()[j] = saved - step;
    const double down = evaluate_loss(net, batch);
    net.parameters()[j] = saved;
    const double fd = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(fd), std::abs(ad.grad[j]), floor});
    out.max_relative = std::max(out.max_relative, std::abs(fd - ad.grad[j]) / denom);
    ++out.checked;
  }
  return out;
}

}  // namespace bsderk::testing
