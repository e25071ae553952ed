#include "bsderk/stochastics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "bsderk/errors.hpp"

namespace bsderk {

namespace {

void fill_normal(Eigen::MatrixXd& m, double scale, Gaussian& gauss) {
  double* p = m.data();
  const Eigen::Index size = m.size();
  for (Eigen::Index i = 0; i < size; ++i) p[i] = scale * gauss();
}

template <class T>
void put(std::ofstream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "trace format assumes a little-endian host");
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

}  // namespace

ForwardModel ForwardModel::drifted_bm(Eigen::VectorXd mu, Eigen::MatrixXd sigma, Eigen::VectorXd x0) {
  const auto d = x0.size();
  if (d < 1) throw InvalidParameter("dimension must be at least 1");
  if (mu.size() != d) throw InvalidParameter("mu must have the dimension of x0");
  if (sigma.rows() != d || sigma.cols() != d) throw InvalidParameter("sigma must be d x d");
  if (!mu.allFinite() || !sigma.allFinite() || !x0.allFinite()) throw InvalidParameter("non-finite coefficient");
  ForwardModel m;
  m.kind_ = ForwardKind::drifted_bm;
  m.mu_ = std::move(mu);
  m.sigma_ = std::move(sigma);
  m.x0_ = std::move(x0);
  return m;
}

ForwardModel ForwardModel::cir_nv(int dim, double a, double b, double sigma_cir, double x0) {
  if (dim < 1) throw InvalidParameter("dimension must be at least 1");
  if (!(a > 0.0) || !(b > 0.0)) throw InvalidParameter("CIR requires a > 0 and b > 0");
  if (!(sigma_cir >= 0.0)) throw InvalidParameter("CIR volatility must be non-negative");
  if (!(x0 >= 0.0)) throw InvalidParameter("CIR initial state must be non-negative");
  if (2.0 * a * b < sigma_cir * sigma_cir) throw InvalidParameter("Feller condition 2ab >= sigma^2 violated");
  ForwardModel m;
  m.kind_ = ForwardKind::cir_nv;
  m.a_ = a;
  m.b_ = b;
  m.sigma_cir_ = sigma_cir;
  m.x0_ = Eigen::VectorXd::Constant(dim, x0);
  m.mu_ = Eigen::VectorXd::Zero(dim);
  m.sigma_ = Eigen::MatrixXd::Zero(dim, dim);
  return m;
}

Eigen::VectorXd ForwardModel::drift_at(const Eigen::VectorXd& x) const {
  if (kind_ == ForwardKind::drifted_bm) return mu_;
  return (a_ * (b_ - x.array())).matrix();
}

Eigen::MatrixXd ForwardModel::diffusion_at(const Eigen::VectorXd& x) const {
  if (kind_ == ForwardKind::drifted_bm) return sigma_;
  return (sigma_cir_ * x.array().max(0.0).sqrt()).matrix().asDiagonal();
}

std::int64_t ForwardModel::advance(Eigen::MatrixXd& x, double dt, const Eigen::MatrixXd& dw) const {
  if (dt <= 0.0) return 0;
  if (kind_ == ForwardKind::drifted_bm) {
    x.noalias() += sigma_ * dw;
    x.colwise() += mu_ * dt;
    return 0;
  }
  const double bt = b_ - sigma_cir_ * sigma_cir_ / (4.0 * a_);
  const double decay = std::exp(-0.5 * a_ * dt);
  const double half_sigma = 0.5 * sigma_cir_;
  std::int64_t clamps = 0;
  double* p = x.data();
  const double* w = dw.data();
  const Eigen::Index size = x.size();
  for (Eigen::Index i = 0; i < size; ++i) {
    double v = bt + (p[i] - bt) * decay;
    double root = std::sqrt(std::max(v, 0.0)) + half_sigma * w[i];
    if (root < 0.0) {
      root = 0.0;
      ++clamps;
    }
    v = root * root;
    p[i] = bt + (v - bt) * decay;
  }
  return clamps;
}

PathBatch simulate(const ForwardModel& model, const TimeGrid& grid, int batch, std::uint64_t seed) {
  if (batch < 1) throw InvalidParameter("batch size must be at least 1");
  const int d = model.dim();
  const int Q = grid.stages();
  const double h = grid.step();
  PathBatch out;
  out.steps = grid.steps();
  out.stages = Q;
  out.batch = batch;
  out.seed = seed;
  out.states.resize(static_cast<std::size_t>(grid.steps()) * (Q + 1));
  out.increments.resize(out.states.size());

  Gaussian gauss(make_engine(seed, {0x5041u}));
  Eigen::MatrixXd x = model.x0().replicate(1, batch);
  Eigen::MatrixXd sub(d, batch);
  for (int n = 0; n < grid.steps(); ++n) {
    out.states[out.index(n, Q + 1)] = x;
    std::vector<Eigen::MatrixXd> deltas(static_cast<std::size_t>(Q + 1), Eigen::MatrixXd::Zero(d, batch));
    // Chronological order: t_{n,Q+1} = t_n, t_{n,Q}, ..., t_{n,1} = t_{n+1}.
    for (int q = Q; q >= 1; --q) {
      const double dt = (grid.c(q + 1) - grid.c(q)) * h;
      if (dt > 0.0) {
        fill_normal(sub, std::sqrt(dt), gauss);
        out.clamps += model.advance(x, dt, sub);
        deltas[static_cast<std::size_t>(q)] = sub;
      }
      out.states[out.index(n, q)] = x;
    }
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, batch);
    out.increments[out.index(n, 1)] = acc;
    for (int q = 2; q <= Q + 1; ++q) {
      acc += deltas[static_cast<std::size_t>(q - 1)];
      out.increments[out.index(n, q)] = acc;
    }
  }
  return out;
}

PathBatch simulate_bm(const ForwardModel& model, const TimeGrid& grid, int batch, std::uint64_t seed) {
  if (model.kind() != ForwardKind::drifted_bm) throw InvalidParameter("simulate_bm requires a drifted BM model");
  return simulate(model, grid, batch, seed);
}

PathBatch simulate_cir_nv(const ForwardModel& model, const TimeGrid& grid, int batch, std::uint64_t seed) {
  if (model.kind() != ForwardKind::cir_nv) throw InvalidParameter("simulate_cir_nv requires a CIR model");
  return simulate(model, grid, batch, seed);
}

StepBatch sample_step(const ForwardModel& model, const TimeGrid& grid, int n, int batch, Engine& engine) {
  if (batch < 1) throw InvalidParameter("batch size must be at least 1");
  if (n < 0 || n >= grid.steps()) throw InvalidParameter("step index out of range");
  const int d = model.dim();
  const int Q = grid.stages();
  const double h = grid.step();
  Gaussian gauss(engine);
  StepBatch out;
  Eigen::MatrixXd x = model.x0().replicate(1, batch);
  Eigen::MatrixXd sub(d, batch);

  if (model.kind() == ForwardKind::drifted_bm) {
    const double tn = grid.time(n);
    if (tn > 0.0) {
      fill_normal(sub, std::sqrt(tn), gauss);
      model.advance(x, tn, sub);
    }
  } else {
    for (int m = 0; m < n; ++m) {
      for (int q = Q; q >= 1; --q) {
        const double dt = (grid.c(q + 1) - grid.c(q)) * h;
        if (dt <= 0.0) continue;
        fill_normal(sub, std::sqrt(dt), gauss);
        out.clamps += model.advance(x, dt, sub);
      }
    }
  }

  out.x.assign(static_cast<std::size_t>(Q + 1), Eigen::MatrixXd());
  out.dw.assign(static_cast<std::size_t>(Q + 1), Eigen::MatrixXd());
  std::vector<Eigen::MatrixXd> deltas(static_cast<std::size_t>(Q + 1), Eigen::MatrixXd::Zero(d, batch));
  out.x[static_cast<std::size_t>(Q)] = x;
  for (int q = Q; q >= 1; --q) {
    const double dt = (grid.c(q + 1) - grid.c(q)) * h;
    if (dt > 0.0) {
      fill_normal(sub, std::sqrt(dt), gauss);
      out.clamps += model.advance(x, dt, sub);
      deltas[static_cast<std::size_t>(q)] = sub;
    }
    out.x[static_cast<std::size_t>(q - 1)] = x;
  }
  out.dw[0] = Eigen::MatrixXd::Zero(d, batch);
  for (int q = 2; q <= Q + 1; ++q) {
    out.dw[static_cast<std::size_t>(q - 1)] = out.dw[static_cast<std::size_t>(q - 2)] + deltas[static_cast<std::size_t>(q - 1)];
  }
  engine = gauss.engine();
  return out;
}

Eigen::MatrixXd h_weight(const TimeGrid& grid, const std::vector<Eigen::MatrixXd>& dw, int q) {
  if (q < 2 || q > grid.stages() + 1) throw InvalidParameter("H_q is defined for 1 < q <= Q+1");
  return dw.at(static_cast<std::size_t>(q - 1)) / (grid.c(q) * grid.step());
}

Eigen::MatrixXd h_weight(const TimeGrid& grid, const std::vector<Eigen::MatrixXd>& dw, int q, int k) {
  if (k < 1 || k >= q) throw InvalidParameter("H_{q,k} is defined for k < q");
  if (k == 1) return h_weight(grid, dw, q);
  const auto& dq = dw.at(static_cast<std::size_t>(q - 1));
  const double gap = (grid.c(q) - grid.c(k)) * grid.step();
  if (gap == 0.0) return Eigen::MatrixXd::Zero(dq.rows(), dq.cols());
  return (dq - dw.at(static_cast<std::size_t>(k - 1))) / gap;
}

HWeights build_h_weights(const TimeGrid& grid, const PathBatch& paths) {
  if (paths.steps != grid.steps() || paths.stages != grid.stages()) {
    throw InvalidParameter("path batch does not match the grid");
  }
  const int Q = grid.stages();
  const double h = grid.step();
  HWeights out;
  out.steps = paths.steps;
  out.stages = Q;
  out.hq.resize(static_cast<std::size_t>(paths.steps) * (Q + 1));
  out.hqk.resize(out.hq.size() * (Q + 1));
  out.lambda = std::numeric_limits<double>::infinity();
  out.Lambda = 0.0;
  for (int n = 0; n < paths.steps; ++n) {
    std::vector<Eigen::MatrixXd> dw(static_cast<std::size_t>(Q + 1));
    for (int q = 1; q <= Q + 1; ++q) dw[static_cast<std::size_t>(q - 1)] = paths.dw(n, q);
    const auto base = static_cast<std::size_t>(n * (Q + 1));
    out.hq[base] = Eigen::MatrixXd::Zero(dw[0].rows(), dw[0].cols());
    for (int q = 2; q <= Q + 1; ++q) {
      auto hq = h_weight(grid, dw, q);
      const Eigen::ArrayXd second = hq.array().square().rowwise().mean();
      out.lambda = std::min(out.lambda, h * second.minCoeff());
      out.Lambda = std::max(out.Lambda, h * second.maxCoeff());
      out.hq[base + q - 1] = std::move(hq);
      for (int k = 1; k < q; ++k) out.hqk[(base + q - 1) * (Q + 1) + k - 1] = h_weight(grid, dw, q, k);
    }
  }
  return out;
}

Moments cir_moments(double a, double b, double sigma, double x0, double horizon) {
  const double e = std::exp(-a * horizon);
  const double mean = b + (x0 - b) * e;
  const double var = x0 * sigma * sigma / a * (e - e * e) + b * sigma * sigma / (2.0 * a) * (1.0 - e) * (1.0 - e);
  return {mean, var + mean * mean};
}

Moments nv_moments(double a, double b, double sigma, double x0, double horizon, int steps) {
  if (steps < 1) throw InvalidParameter("number of steps must be at least 1");
  const double h = horizon / steps;
  const double bt = b - sigma * sigma / (4.0 * a);
  const double e = std::exp(-0.5 * a * h);
  const double shift = bt * (1.0 - e);
  const double s2 = sigma * sigma * h / 4.0;
  double m1 = x0;
  double m2 = x0 * x0;
  auto drift = [&] {
    m2 = shift * shift + 2.0 * shift * e * m1 + e * e * m2;
    m1 = shift + e * m1;
  };
  for (int n = 0; n < steps; ++n) {
    drift();
    m2 = m2 + 6.0 * s2 * m1 + 3.0 * s2 * s2;
    m1 = m1 + s2;
    drift();
  }
  return {m1, m2};
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& weights) {
  if (x.size() != y.size()) throw InvalidParameter("slope fit needs matching x and y");
  if (!weights.empty() && weights.size() != x.size()) throw InvalidParameter("slope fit weights mismatch");
  if (x.size() < 2) throw InvalidParameter("slope fit needs at least two points");
  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    sw += w;
    sx += w * std::log2(x[i]);
    sy += w * std::log2(y[i]);
  }
  const double mx = sx / sw, my = sy / sw;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    const double dx = std::log2(x[i]) - mx;
    sxx += w * dx * dx;
    sxy += w * dx * (std::log2(y[i]) - my);
  }
  if (sxx <= 0.0) throw InvalidParameter("slope fit needs distinct x values");
  return -sxy / sxx;
}

WeakOrderResult weak_order_probe(const ForwardModel& model, double horizon, const std::vector<int>& steps,
                                 const std::vector<TestFunction>& tests, int batch, std::uint64_t seed) {
  if (steps.size() < 3) throw InvalidParameter("weak order fit needs at least three grids");
  if (tests.empty()) throw InvalidParameter("no test functions");
  if (batch < 2) throw InvalidParameter("batch size must be at least 2");
  const int max_steps = *std::max_element(steps.begin(), steps.end());
  const int fine = 16 * max_steps;
  for (int s : steps) {
    if (s < 1 || fine % s != 0) throw InvalidParameter("grid sizes must divide the fine grid");
  }
  const int d = model.dim();
  const std::size_t nt = tests.size(), ns = steps.size();
  const double hf = horizon / fine;

  std::vector<std::vector<double>> sum(nt, std::vector<double>(ns, 0.0)), sum2 = sum;
  std::vector<double> ref(nt, 0.0), ref2(nt, 0.0);

  Gaussian gauss(make_engine(seed, {0x57454bu}));
  const int chunk = std::min(batch, 1 << 15);
  Eigen::MatrixXd dw(d, chunk);
  for (int done = 0; done < batch; done += chunk) {
    const int b = std::min(chunk, batch - done);
    if (dw.cols() != b) dw.resize(d, b);
    Eigen::MatrixXd xf = model.x0().replicate(1, b);
    std::vector<Eigen::MatrixXd> xc(ns, xf);
    std::vector<Eigen::MatrixXd> acc(ns, Eigen::MatrixXd::Zero(d, b));
    for (int i = 1; i <= fine; ++i) {
      fill_normal(dw, std::sqrt(hf), gauss);
      model.advance(xf, hf, dw);
      for (std::size_t j = 0; j < ns; ++j) {
        acc[j] += dw;
        const int ratio = fine / steps[j];
        if (i % ratio == 0) {
          model.advance(xc[j], horizon / steps[j], acc[j]);
          acc[j].setZero();
        }
      }
    }
    for (std::size_t t = 0; t < nt; ++t) {
      for (int s = 0; s < b; ++s) {
        const double vf = tests[t].v(xf(0, s));
        ref[t] += vf;
        ref2[t] += vf * vf;
        for (std::size_t j = 0; j < ns; ++j) {
          const double diff = tests[t].v(xc[j](0, s)) - vf;
          sum[t][j] += diff;
          sum2[t][j] += diff * diff;
        }
      }
    }
  }

  WeakOrderResult out;
  out.steps = steps;
  out.fine_steps = fine;
  std::vector<double> xs(steps.begin(), steps.end());
  for (std::size_t t = 0; t < nt; ++t) {
    const double mean_ref = ref[t] / batch;
    out.reference.push_back(mean_ref);
    out.reference_se.push_back(std::sqrt(std::max(0.0, ref2[t] / batch - mean_ref * mean_ref) / batch));
    std::vector<double> err, se, fx, fy;
    for (std::size_t j = 0; j < ns; ++j) {
      const double m = sum[t][j] / batch;
      err.push_back(std::abs(m));
      se.push_back(std::sqrt(std::max(0.0, sum2[t][j] / batch - m * m) / batch));
      if (std::abs(m) > 1e-13) {
        fx.push_back(xs[j]);
        fy.push_back(std::abs(m));
      }
    }
    out.slopes.push_back(fx.size() >= 2 ? loglog_slope(fx, fy) : std::numeric_limits<double>::quiet_NaN());
    out.errors.push_back(std::move(err));
    out.std_errors.push_back(std::move(se));
  }
  return out;
}

void write_path_trace(const PathBatch& paths, const std::string& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw InvalidParameter("cannot open trace file " + file);
  const int d = paths.states.empty() ? 0 : static_cast<int>(paths.states.front().rows());
  put<std::int32_t>(out, paths.steps);
  put<std::int32_t>(out, paths.stages);
  put<std::int32_t>(out, paths.batch);
  put<std::int32_t>(out, d);
  for (int n = 0; n < paths.steps; ++n) {
    for (int q = 1; q <= paths.stages + 1; ++q) {
      const auto& x = paths.x(n, q);
      const auto& w = paths.dw(n, q);
      for (int s = 0; s < paths.batch; ++s) {
        for (int i = 0; i < d; ++i) put<double>(out, x(i, s));
        for (int i = 0; i < d; ++i) put<double>(out, w(i, s));
      }
    }
  }
}

}  // namespace bsderk
