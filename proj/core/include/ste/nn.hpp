#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

#include "ste/rng.hpp"
#include "ste/scenario.hpp"

namespace ste::nn {

enum class Activation { swish, linear, softmax };
enum class OutputKind { regression, classification };
enum class LossKind { mae, cce };

double swish(double x);
/// d/dx [x * sigmoid(x)]
double swish_derivative(double x);

/// Numerically stable softmax (max-shifted).
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

/// Uniform partition of [lo, hi] into `bins` classes.
struct BinGrid {
  double lo = -500.0;
  double hi = 0.0;
  int bins = 100;

  double width() const { return (hi - lo) / bins; }
  double midpoint(int j) const { return lo + (j + 0.5) * width(); }
  /// Bin holding x; values outside [lo, hi] clamp to the edge bins.
  int index(double x) const;
};

inline BinGrid default_x_bins() { return {-500.0, 0.0, 100}; }
inline BinGrid default_y_bins() { return {-250.0, 250.0, 100}; }

/// sum_j p_j * midpoint_j
double binned_expectation(std::span<const double> probs, const BinGrid& bins);

/// Fully connected layer y = x W + b, W stored N_in x N_out.
struct DenseLayer {
  Eigen::MatrixXd weights;
  Eigen::VectorXd biases;
  Activation activation = Activation::linear;

  Eigen::Index fan_in() const { return weights.rows(); }
  Eigen::Index fan_out() const { return weights.cols(); }
};

struct MlpModel {
  std::vector<DenseLayer> layers;
  OutputKind kind = OutputKind::regression;
  /// Softmax heads split the final layer into this many equal blocks.
  int softmax_blocks = 1;
  Normalizer normalizer;
  BinGrid x_bins = default_x_bins();
  BinGrid y_bins = default_y_bins();

  Eigen::Index input_width() const { return layers.front().fan_in(); }
  Eigen::Index output_width() const { return layers.back().fan_out(); }
  std::size_t parameter_count() const;
};

/// Dense stack with the given widths (input first). Weights are drawn
/// uniformly in +-sqrt(6 / fan_in); biases start at zero.
MlpModel make_mlp(const std::vector<int>& widths, const std::vector<Activation>& activations, Engine& rng);

/// 20 -> 150 -> 200 -> 3, swish, swish, linear.
MlpModel make_regression_model(Engine& rng, int inputs = 20);

/// 20 -> 150 -> 200 -> 2 x bins, swish, swish, block softmax.
MlpModel make_classification_model(Engine& rng, int inputs = 20, int bins = 100);

/// Intermediate values kept for backpropagation.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;  // input to each layer
  std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
};

/// Batch forward pass on normalized features (one row per example).
Eigen::MatrixXd forward(const MlpModel& m, const Eigen::MatrixXd& x);
Eigen::MatrixXd forward(const MlpModel& m, const Eigen::MatrixXd& x, ForwardCache& cache);

/// Mean over all N * K entries.
double mae_loss(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred);
/// -(1/N) sum of y log p over every block, log clamped at 1e-12.
double cce_loss(const Eigen::MatrixXd& onehots, const Eigen::MatrixXd& probs);

/// Loss value and its gradient with respect to the final layer's
/// pre-activation. For softmax + CCE this is (p - y) / N.
double loss_and_gradient(LossKind loss, const Eigen::MatrixXd& output, const Eigen::MatrixXd& target,
                         Eigen::MatrixXd& grad_pre);

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

/// Backpropagates d(loss)/d(final pre-activation) through the cached pass.
Gradients backward(const MlpModel& m, const ForwardCache& cache, const Eigen::MatrixXd& grad_final_pre);

/// forward + loss + backward on one batch; returns the loss.
double loss_gradients(const MlpModel& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, LossKind loss,
                      Gradients& grads);

/// Contiguous parameter block seen by the optimizer.
struct ParamRef {
  double* data;
  Eigen::Index size;
};

std::vector<ParamRef> parameter_refs(MlpModel& m);
std::vector<ParamRef> parameter_refs(Gradients& g);

struct NadamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with a Nesterov look-ahead on the first moment:
///   m = b1 m + (1 - b1) g,  v = b2 v + (1 - b2) g^2
///   m_hat = b1 m / (1 - b1^(t+1)) + (1 - b1) g / (1 - b1^t)
///   theta -= lr * m_hat / (sqrt(v / (1 - b2^t)) + eps)
class Nadam {
 public:
  explicit Nadam(NadamConfig cfg = {}) : cfg_(cfg) {}

  void step(std::span<const ParamRef> params, std::span<const ParamRef> grads);
  long timestep() const { return t_; }

 private:
  NadamConfig cfg_;
  long t_ = 0;
  std::vector<Eigen::ArrayXd> m_;
  std::vector<Eigen::ArrayXd> v_;
};

struct TrainConfig {
  int epochs = 500;
  int batch_size = 128;
  NadamConfig optimizer;
  std::uint64_t seed = 0;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
};

/// Mini-batch training on already-encoded arrays. Each epoch uses a fresh
/// permutation from (seed, shuffle, epoch); the last partial batch is kept.
/// Validation loss is recorded but never alters training. Throws
/// TrainingError on a non-finite loss.
TrainHistory train_arrays(MlpModel& m, LossKind loss, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                          const Eigen::MatrixXd& x_val, const Eigen::MatrixXd& y_val, const TrainConfig& cfg);

/// Normalized inputs and encoded targets (z-scored for regression, one-hot
/// blocks for classification) for a dataset under the model's normalizer.
Eigen::MatrixXd encode_inputs(const MlpModel& m, const Dataset& d);
Eigen::MatrixXd encode_targets(const MlpModel& m, const Dataset& d);

struct TrainResult {
  MlpModel model;
  TrainHistory history;
};

/// Builds the architecture for `kind`, fits the normalizer on `train`, and
/// trains with MAE (regression) or CCE (classification).
TrainResult fit_model(OutputKind kind, const Dataset& train, const Dataset& val, const TrainConfig& cfg);

/// Raw dataset features -> physical predictions. Regression returns N x 3
/// (x_c, y_c, mass); classification returns N x 2 binned expectations.
Eigen::MatrixXd predict(const MlpModel& m, const Eigen::MatrixXd& raw_features);

/// Classification only: N x 2*bins probabilities for raw features.
Eigen::MatrixXd predict_probabilities(const MlpModel& m, const Eigen::MatrixXd& raw_features);

struct Metrics {
  double location_error = 0.0;  // mean Euclidean distance, m
  double mass_mae = 0.0;        // g; NaN when the model has no mass output
  std::vector<double> row_location_error;
  std::vector<double> row_mass_error;
};

/// Scores predictions (N x 2 or N x 3) against targets (N x 3).
Metrics score(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth);
Metrics evaluate(const MlpModel& m, const Dataset& test);

}  // namespace ste::nn
