#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bsderk/random.hpp"

namespace bsderk {

/// Elementwise tanh through exp, which Eigen vectorizes.
Eigen::ArrayXXd fast_tanh(const Eigen::ArrayXXd& z);

/// Intermediate activations kept by Mlp::forward for the backward pass.
struct MlpCache {
  std::vector<Eigen::MatrixXd> activations;  // a_0 (normalized input), a_1, ..., a_{L-1}
};

/// Fully connected network x -> M_L o tanh o M_{L-1} o ... o tanh o M_1 (x~),
/// with x~ = (x - shift) / scale a fixed input normalization. Parameters are
/// stored in one flat vector, layer by layer, each as W (column-major) then b.
class Mlp {
 public:
  Mlp() = default;
  /// Two hidden layers of the given width.
  Mlp(int input_dim, int width, int output_dim);
  Mlp(int input_dim, std::vector<int> hidden, int output_dim);

  static std::size_t parameter_count(int input_dim, const std::vector<int>& hidden, int output_dim);

  /// Glorot-uniform weights, zero biases.
  void initialize(std::uint64_t seed);

  int input_dim() const { return d0_; }
  int output_dim() const { return d1_; }
  const std::vector<int>& hidden() const { return hidden_; }
  std::size_t size() const { return static_cast<std::size_t>(theta_.size()); }
  std::uint64_t seed() const { return seed_; }

  Eigen::VectorXd& parameters() { return theta_; }
  const Eigen::VectorXd& parameters() const { return theta_; }

  void set_normalization(Eigen::VectorXd shift, Eigen::VectorXd scale);
  const Eigen::VectorXd& shift() const { return shift_; }
  const Eigen::VectorXd& scale() const { return scale_; }

  /// Outputs d1 x B for inputs d0 x B.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, MlpCache& cache) const;
  /// Gradient of a loss with respect to the parameters given dL/d(output).
  Eigen::VectorXd backward(const MlpCache& cache, const Eigen::MatrixXd& grad_output) const;

  void save(const std::string& file) const;
  static Mlp load(const std::string& file);

 private:
  struct Layer {
    std::size_t weight = 0;  // offset of W in theta
    std::size_t bias = 0;
    int rows = 0;
    int cols = 0;
  };
  void build();
  Eigen::Map<const Eigen::MatrixXd> weight(const Layer& l) const;
  Eigen::Map<const Eigen::VectorXd> bias(const Layer& l) const;
  Eigen::MatrixXd normalize(const Eigen::MatrixXd& x) const;

  int d0_ = 0;
  int d1_ = 0;
  std::vector<int> hidden_;
  std::vector<Layer> layers_;
  Eigen::VectorXd theta_;
  Eigen::VectorXd shift_;
  Eigen::VectorXd scale_;
  std::uint64_t seed_ = 0;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t step = 0;
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(std::size_t size = 0, double learning_rate = 1e-2);
};

/// Bias-corrected ADAM update of theta in place.
void adam_step(AdamState& state, Eigen::VectorXd& theta, const Eigen::VectorXd& grad);

/// A minibatch together with its loss as a function of the network outputs.
class LossBatch {
 public:
  virtual ~LossBatch() = default;
  virtual const Eigen::MatrixXd& inputs() const = 0;
  /// Mean loss over the batch and, when requested, dL/d(output).
  /// Throws NumericalError naming the first non-finite sample.
  virtual double loss(const Eigen::MatrixXd& output, Eigen::MatrixXd* grad_output) const = 0;
};

/// Source of fresh minibatches.
class RegressionTask {
 public:
  virtual ~RegressionTask() = default;
  virtual std::unique_ptr<LossBatch> draw(int batch, Engine& engine) const = 0;
};

struct LossAndGradient {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

LossAndGradient compute_gradient(const Mlp& net, const LossBatch& batch);
double evaluate_loss(const Mlp& net, const LossBatch& batch);

struct TrainSchedule {
  int batch = 1000;
  int check_interval = 50;
  double decay = 0.5;
  double decay_threshold = 0.05;
  double initial_lr = 1e-2;
  double stop_lr = 1e-9;
  int max_epochs = 20000;

  void validate() const;
};

struct TrainLogRow {
  int epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double lr = 0.0;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  int epochs = 0;
  double final_test_loss = 0.0;
  bool hit_max_epochs = false;
};

/// ADAM on fresh minibatches of size b; every check_interval epochs the loss
/// on a fixed test batch of size 2b is compared with the previous check and
/// the learning rate is multiplied by `decay` when the relative improvement
/// is below `decay_threshold`. Stops once lr <= stop_lr.
TrainLog train_to_convergence(const RegressionTask& task, Mlp& net, const TrainSchedule& schedule, Engine& engine);

}  // namespace bsderk
