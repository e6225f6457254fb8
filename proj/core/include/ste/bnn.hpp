#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ste/nn.hpp"
#include "ste/scenario.hpp"
#include "ste/sensing.hpp"

namespace ste::bnn {

/// ln(1 + e^x), overflow-safe.
double softplus(double rho);
double softplus_inverse(double sigma);

/// Mean-field Gaussian layer: each weight is N(mu, softplus(rho)^2).
struct VariationalLayer {
  Eigen::MatrixXd w_mu, w_rho;
  Eigen::VectorXd b_mu, b_rho;
  nn::Activation activation = nn::Activation::linear;
};

/// Observation model of the ELBO data term on z-scored targets.
enum class NoiseModel {
  fixed_unit,  // N(y | f(x), 1)
  learned,     // N(y | f(x), exp(log_noise_var[k])), one variance per output
};

struct VariationalMlpModel {
  std::vector<VariationalLayer> layers;
  Normalizer normalizer;
  NoiseModel noise = NoiseModel::fixed_unit;
  Eigen::VectorXd log_noise_var;  // per output column

  Eigen::Index input_width() const { return layers.front().w_mu.rows(); }
  Eigen::Index output_width() const { return layers.back().w_mu.cols(); }
  std::size_t parameter_count() const;  // number of (mu, rho) pairs
};

/// Means initialized like the deterministic network; every sigma starts at sigma0.
VariationalMlpModel make_variational_mlp(const std::vector<int>& widths, const std::vector<nn::Activation>& activations,
                                         Engine& rng, double sigma0 = 0.05);
/// 20 -> 150 -> 200 -> 3 (swish, swish, linear).
VariationalMlpModel make_variational_model(Engine& rng, int inputs = 20, double sigma0 = 0.05);

/// One draw w = mu + sigma * eps, with the standard-normal draws kept for
/// reparameterized gradients.
struct Realization {
  nn::MlpModel network;
  std::vector<Eigen::MatrixXd> eps_w;
  std::vector<Eigen::VectorXd> eps_b;
};

Realization sample_weights(const VariationalMlpModel& m, Engine& rng);
/// Rebuilds the network for given eps (which must match the model's shape).
Realization realize(const VariationalMlpModel& m, std::vector<Eigen::MatrixXd> eps_w, std::vector<Eigen::VectorXd> eps_b);
/// Network at the variational means.
nn::MlpModel mean_network(const VariationalMlpModel& m);

/// KL(q || N(0, 1)) summed over every weight and bias.
double kl_to_prior(const VariationalMlpModel& m);

/// Negative ELBO on a batch: Gaussian NLL of the targets under one weight
/// draw plus kl_scale * (batch / n_total) * KL.
struct ElboTerms {
  double nll = 0.0;
  double kl = 0.0;
  double kl_weight = 0.0;
  double loss = 0.0;
};

/// Gaussian negative log-likelihood summed over rows and outputs.
double gaussian_nll(const VariationalMlpModel& m, const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);

ElboTerms elbo_loss(const VariationalMlpModel& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, Engine& rng,
                    std::size_t n_total, double kl_scale = 1.0);
/// Same objective with the draw fixed.
ElboTerms elbo_loss_frozen(const VariationalMlpModel& m, const Realization& r, const Eigen::MatrixXd& x,
                           const Eigen::MatrixXd& y, std::size_t n_total, double kl_scale = 1.0);

struct VariationalGradients {
  std::vector<Eigen::MatrixXd> w_mu, w_rho;
  std::vector<Eigen::VectorXd> b_mu, b_rho;
  Eigen::VectorXd log_noise_var;
};

/// Reparameterized gradient of elbo_loss_frozen with respect to (mu, rho)
/// and, for the learned noise model, log_noise_var. Returns the loss.
double elbo_gradients(const VariationalMlpModel& m, const Realization& r, const Eigen::MatrixXd& x,
                      const Eigen::MatrixXd& y, std::size_t n_total, double kl_scale, VariationalGradients& out);

struct BnnTrainConfig {
  nn::TrainConfig base = [] { nn::TrainConfig c; c.epochs = 500; return c; }();
  NoiseModel noise = NoiseModel::learned;
  double sigma0 = 0.05;
  /// Multiplies the KL term; 1 is the plain ELBO.
  double kl_scale = 1.0;
};

struct BnnHistory {
  std::vector<double> train_loss;  // negative ELBO per training row
  std::vector<double> val_nll;     // per row, evaluated at the means
  double initial_val_nll = 0.0;
};

/// Nadam on (mu, rho) with one weight draw per batch from (seed, weights, epoch, batch).
BnnHistory train_bnn_arrays(VariationalMlpModel& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                            const Eigen::MatrixXd& x_val, const Eigen::MatrixXd& y_val, const BnnTrainConfig& cfg);

struct BnnTrainResult {
  VariationalMlpModel model;
  BnnHistory history;
};

BnnTrainResult fit_bnn(const Dataset& train, const Dataset& val, const BnnTrainConfig& cfg);

/// One forward pass through one sampled network, in physical units.
Eigen::Vector3d predict_stochastic(const VariationalMlpModel& m, std::span<const double> raw_features, Engine& rng);

/// Prediction at the variational means, in physical units (N x 3).
Eigen::MatrixXd predict_mean(const VariationalMlpModel& m, const Eigen::MatrixXd& raw_features);

/// Independent stochastic predictions for every row (N x 3, physical
/// units). Row j draws from the engine (seed, weights, j). Pre-activations
/// are sampled directly from their Gaussian law given the layer input,
/// which has the same distribution as drawing every weight.
Eigen::MatrixXd sample_predictions(const VariationalMlpModel& m, const Eigen::MatrixXd& raw_features, std::uint64_t seed);

/// Test-set metrics with weights resampled for every row, as in
/// sample_predictions. Different seeds give independent evaluations.
nn::Metrics evaluate_stochastic(const VariationalMlpModel& m, const Dataset& test, std::uint64_t seed);

struct PosteriorSampleSet {
  Eigen::MatrixXd samples;  // M x 3 (x_c, y_c, mass)
  std::string tag;          // "epistemic" or "epistemic+aleatoric"
  std::uint64_t seed = 0;
};

/// M draws on one fixed input: weight uncertainty only.
PosteriorSampleSet epistemic_density(const VariationalMlpModel& m, std::span<const double> raw_features, std::size_t samples,
                                     std::uint64_t seed);

struct CombinedOptions {
  /// Reuse one measurement for every draw (removes the counting noise).
  bool reuse_measurement = false;
};

/// M draws, each on a fresh Poisson measurement of the given mean counts.
PosteriorSampleSet combined_density(const VariationalMlpModel& m, std::span<const double> mean_counts, double u, double v,
                                    double t_obs, std::size_t samples, std::uint64_t seed, CombinedOptions opts = {});

/// Convenience: simulate the scenario's mean counts, then combined_density.
PosteriorSampleSet combined_density(const VariationalMlpModel& m, const Scenario& s,
                                    std::span<const DetectorSpec> detectors, const PhysicsConstants& pc,
                                    const GridConfig& grid, std::size_t samples, std::uint64_t seed,
                                    CombinedOptions opts = {});

}  // namespace ste::bnn
