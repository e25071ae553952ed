#include <benchmark/benchmark.h>

#include "bsderk/grid_tableau.hpp"
#include "bsderk/neuralnet.hpp"
#include "bsderk/oracle.hpp"
#include "bsderk/problems.hpp"
#include "bsderk/schemes.hpp"
#include "bsderk/stochastics.hpp"

using namespace bsderk;

namespace {

// Batch of 1000 inputs through the default d = 10 stage network.
void BM_MlpForward(benchmark::State& state) {
  Mlp net(10, 20, static_cast<int>(state.range(0)));
  net.initialize(1);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(10, 1000);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_MlpForward)->Arg(11)->Arg(21);

void BM_MlpBackward(benchmark::State& state) {
  Mlp net(10, 20, static_cast<int>(state.range(0)));
  net.initialize(1);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(10, 1000);
  MlpCache cache;
  const Eigen::MatrixXd out = net.forward(x, cache);
  const Eigen::MatrixXd g = Eigen::MatrixXd::Ones(out.rows(), out.cols());
  for (auto _ : state) benchmark::DoNotOptimize(net.backward(cache, g));
}
BENCHMARK(BM_MlpBackward)->Arg(11)->Arg(21);

void BM_SampleStepBm(benchmark::State& state) {
  const BmCosProblem p;
  const TimeGrid g(1.0, 16, crank_nicolson_tableau().abscissae());
  Engine e = make_engine(3);
  for (auto _ : state) benchmark::DoNotOptimize(sample_step(p.forward(), g, 8, 1000, e));
}
BENCHMARK(BM_SampleStepBm);

void BM_SampleStepCir(benchmark::State& state) {
  const CirCosProblem p;
  const TimeGrid g(1.0, 8, crank_nicolson_tableau().abscissae());
  Engine e = make_engine(3);
  for (auto _ : state) benchmark::DoNotOptimize(sample_step(p.forward(), g, 7, 4000, e));
}
BENCHMARK(BM_SampleStepCir);

void BM_CnStageLoss(benchmark::State& state) {
  const BmCosProblem p;
  const auto spec = make_scheme("cn");
  const TimeGrid g(1.0, 16, spec.tableau.abscissae());
  Engine e = make_engine(4);
  const auto batch = sample_step(p.forward(), g, 8, 1000, e);
  Mlp next(10, 20, 21), net(10, 20, 21);
  next.initialize(5);
  net.initialize(6);
  const NetworkFunction fn(next);
  const auto target = build_stage_target(p, g, spec, 8, 2, batch, {&fn});
  const Eigen::MatrixXd out = net.forward(target.x);
  Eigen::MatrixXd grad;
  for (auto _ : state) benchmark::DoNotOptimize(stage_loss(p, target, out, &grad));
}
BENCHMARK(BM_CnStageLoss);

void BM_OracleRk3(benchmark::State& state) {
  const BmCosProblem p(1, 1.0, 10.0);
  const auto tab = rk3_tableau(0.5, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(quadrature_solve(p, tab, static_cast<int>(state.range(0))).y0);
}
BENCHMARK(BM_OracleRk3)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace
