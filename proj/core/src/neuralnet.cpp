#include "bsderk/neuralnet.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include <boost/random/uniform_real_distribution.hpp>
#include <json.hpp>

#include "bsderk/errors.hpp"

namespace bsderk {

Eigen::ArrayXXd fast_tanh(const Eigen::ArrayXXd& z) {
  return 1.0 - 2.0 / ((2.0 * z).exp() + 1.0);
}

Mlp::Mlp(int input_dim, int width, int output_dim) : Mlp(input_dim, std::vector<int>{width, width}, output_dim) {}

Mlp::Mlp(int input_dim, std::vector<int> hidden, int output_dim)
    : d0_(input_dim), d1_(output_dim), hidden_(std::move(hidden)) {
  if (d0_ < 1 || d1_ < 1) throw InvalidParameter("network dimensions must be at least 1");
  for (int m : hidden_) {
    if (m < 1) throw InvalidParameter("hidden widths must be at least 1");
  }
  build();
}

std::size_t Mlp::parameter_count(int input_dim, const std::vector<int>& hidden, int output_dim) {
  std::size_t total = 0;
  int prev = input_dim;
  for (int m : hidden) {
    total += static_cast<std::size_t>(m) * static_cast<std::size_t>(prev + 1);
    prev = m;
  }
  return total + static_cast<std::size_t>(output_dim) * static_cast<std::size_t>(prev + 1);
}

void Mlp::build() {
  layers_.clear();
  std::size_t offset = 0;
  int prev = d0_;
  std::vector<int> widths = hidden_;
  widths.push_back(d1_);
  for (int m : widths) {
    Layer l;
    l.rows = m;
    l.cols = prev;
    l.weight = offset;
    offset += static_cast<std::size_t>(m) * static_cast<std::size_t>(prev);
    l.bias = offset;
    offset += static_cast<std::size_t>(m);
    layers_.push_back(l);
    prev = m;
  }
  theta_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(offset));
  shift_ = Eigen::VectorXd::Zero(d0_);
  scale_ = Eigen::VectorXd::Ones(d0_);
}

void Mlp::initialize(std::uint64_t seed) {
  seed_ = seed;
  Engine engine = make_engine(seed, {0x4d4c50u});
  theta_.setZero();
  for (const auto& l : layers_) {
    const double limit = std::sqrt(6.0 / (l.rows + l.cols));
    boost::random::uniform_real_distribution<double> dist(-limit, limit);
    const std::size_t count = static_cast<std::size_t>(l.rows) * static_cast<std::size_t>(l.cols);
    for (std::size_t i = 0; i < count; ++i) theta_[static_cast<Eigen::Index>(l.weight + i)] = dist(engine);
  }
}

void Mlp::set_normalization(Eigen::VectorXd shift, Eigen::VectorXd scale) {
  if (shift.size() != d0_ || scale.size() != d0_) throw InvalidParameter("normalization size mismatch");
  if ((scale.array() <= 0.0).any()) throw InvalidParameter("normalization scale must be positive");
  shift_ = std::move(shift);
  scale_ = std::move(scale);
}

Eigen::Map<const Eigen::MatrixXd> Mlp::weight(const Layer& l) const {
  return {theta_.data() + l.weight, l.rows, l.cols};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(const Layer& l) const { return {theta_.data() + l.bias, l.rows}; }

Eigen::MatrixXd Mlp::normalize(const Eigen::MatrixXd& x) const {
  if (x.rows() != d0_) {
    throw InvalidParameter("input dimension " + std::to_string(x.rows()) + " does not match network input " +
                           std::to_string(d0_));
  }
  return ((x.colwise() - shift_).array().colwise() / scale_.array()).matrix();
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd a = normalize(x);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Eigen::MatrixXd z = weight(layers_[i]) * a;
    z.colwise() += bias(layers_[i]);
    if (i + 1 < layers_.size()) {
      a = fast_tanh(z.array()).matrix();
    } else {
      return z;
    }
  }
  return a;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, MlpCache& cache) const {
  cache.activations.resize(layers_.size());
  cache.activations[0] = normalize(x);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Eigen::MatrixXd z = weight(layers_[i]) * cache.activations[i];
    z.colwise() += bias(layers_[i]);
    if (i + 1 < layers_.size()) {
      cache.activations[i + 1] = fast_tanh(z.array()).matrix();
    } else {
      return z;
    }
  }
  return {};
}

Eigen::VectorXd Mlp::backward(const MlpCache& cache, const Eigen::MatrixXd& grad_output) const {
  if (cache.activations.size() != layers_.size()) throw InvalidParameter("backward needs a forward cache");
  if (grad_output.rows() != d1_ || grad_output.cols() != cache.activations[0].cols()) {
    throw InvalidParameter("output gradient shape mismatch");
  }
  Eigen::VectorXd grad(theta_.size());
  Eigen::MatrixXd delta = grad_output;
  for (std::size_t j = layers_.size(); j-- > 0;) {
    const Layer& l = layers_[j];
    const auto& a = cache.activations[j];
    Eigen::Map<Eigen::MatrixXd>(grad.data() + l.weight, l.rows, l.cols).noalias() = delta * a.transpose();
    Eigen::Map<Eigen::VectorXd>(grad.data() + l.bias, l.rows) = delta.rowwise().sum();
    if (j > 0) {
      Eigen::MatrixXd back = weight(l).transpose() * delta;
      delta = (back.array() * (1.0 - a.array().square())).matrix();
    }
  }
  return grad;
}

void Mlp::save(const std::string& file) const {
  static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");
  nlohmann::json header = {
      {"format", "bsderk-mlp-1"},
      {"input_dim", d0_},
      {"hidden", hidden_},
      {"output_dim", d1_},
      {"seed", seed_},
      {"parameters", theta_.size()},
      {"shift", std::vector<double>(shift_.data(), shift_.data() + shift_.size())},
      {"scale", std::vector<double>(scale_.data(), scale_.data() + scale_.size())},
  };
  std::ofstream out(file, std::ios::binary);
  if (!out) throw InvalidParameter("cannot write checkpoint " + file);
  out << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(theta_.data()), static_cast<std::streamsize>(theta_.size() * sizeof(double)));
}

Mlp Mlp::load(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw InvalidParameter("cannot read checkpoint " + file);
  std::string line;
  std::getline(in, line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what(), 1);
  }
  Mlp net(header.at("input_dim").get<int>(), header.at("hidden").get<std::vector<int>>(),
          header.at("output_dim").get<int>());
  if (header.at("parameters").get<Eigen::Index>() != net.theta_.size()) {
    throw ParseError("checkpoint parameter count does not match its dimensions", 1);
  }
  net.seed_ = header.at("seed").get<std::uint64_t>();
  auto shift = header.at("shift").get<std::vector<double>>();
  auto scale = header.at("scale").get<std::vector<double>>();
  net.set_normalization(Eigen::Map<Eigen::VectorXd>(shift.data(), static_cast<Eigen::Index>(shift.size())),
                        Eigen::Map<Eigen::VectorXd>(scale.data(), static_cast<Eigen::Index>(scale.size())));
  in.read(reinterpret_cast<char*>(net.theta_.data()), static_cast<std::streamsize>(net.theta_.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(net.theta_.size() * sizeof(double))) {
    throw ParseError("checkpoint truncated", 2);
  }
  return net;
}

AdamState::AdamState(std::size_t size, double learning_rate)
    : m(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size))),
      v(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size))),
      lr(learning_rate) {
  if (!(learning_rate > 0.0)) throw InvalidParameter("learning rate must be positive");
}

void adam_step(AdamState& s, Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
  if (s.m.size() != theta.size() || grad.size() != theta.size()) throw InvalidParameter("ADAM shape mismatch");
  ++s.step;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * grad;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  theta.array() -= s.lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + s.eps);
}

LossAndGradient compute_gradient(const Mlp& net, const LossBatch& batch) {
  MlpCache cache;
  const Eigen::MatrixXd out = net.forward(batch.inputs(), cache);
  Eigen::MatrixXd g;
  LossAndGradient r;
  r.loss = batch.loss(out, &g);
  r.grad = net.backward(cache, g);
  return r;
}

double evaluate_loss(const Mlp& net, const LossBatch& batch) { return batch.loss(net.forward(batch.inputs()), nullptr); }

void TrainSchedule::validate() const {
  if (batch < 1) throw InvalidParameter("batch size must be at least 1");
  if (check_interval < 1) throw InvalidParameter("check interval must be at least 1");
  if (!(decay > 0.0 && decay < 1.0)) throw InvalidParameter("decay factor must lie in (0, 1)");
  if (!(initial_lr > 0.0) || !(stop_lr > 0.0)) throw InvalidParameter("learning rates must be positive");
  if (stop_lr > initial_lr) throw InvalidParameter("stop learning rate exceeds the initial one");
  if (max_epochs < 1) throw InvalidParameter("max epochs must be at least 1");
}

TrainLog train_to_convergence(const RegressionTask& task, Mlp& net, const TrainSchedule& schedule, Engine& engine) {
  schedule.validate();
  AdamState adam(net.size(), schedule.initial_lr);
  const auto test = task.draw(2 * schedule.batch, engine);
  TrainLog log;
  double previous = evaluate_loss(net, *test);
  log.rows.push_back({0, previous, previous, adam.lr});
  double train_sum = 0.0;
  int window = 0;
  for (int epoch = 1; epoch <= schedule.max_epochs; ++epoch) {
    const auto batch = task.draw(schedule.batch, engine);
    const auto lg = compute_gradient(net, *batch);
    adam_step(adam, net.parameters(), lg.grad);
    train_sum += lg.loss;
    ++window;
    log.epochs = epoch;
    if (epoch % schedule.check_interval != 0) continue;
    const double current = evaluate_loss(net, *test);
    if (!std::isfinite(current)) throw NumericalError("non-finite test loss at epoch " + std::to_string(epoch));
    const double improvement = (previous - current) / std::max(std::abs(previous), 1e-300);
    log.rows.push_back({epoch, train_sum / window, current, adam.lr});
    train_sum = 0.0;
    window = 0;
    if (improvement < schedule.decay_threshold) adam.lr *= schedule.decay;
    previous = current;
    if (adam.lr <= schedule.stop_lr * (1.0 + 1e-12)) break;
  }
  log.final_test_loss = evaluate_loss(net, *test);
  log.hit_max_epochs = log.epochs >= schedule.max_epochs && adam.lr > schedule.stop_lr * (1.0 + 1e-12);
  return log;
}

}  // namespace bsderk
