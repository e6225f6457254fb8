#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "ste/scenario.hpp"
#include "ste/sensing.hpp"

namespace ste::dram {

/// theta = (x_c [m], y_c [m], mass [g])
using Theta = Eigen::Vector3d;

/// Uniform prior box.
struct ParameterBounds {
  Interval x_c{-500.0, 0.0};
  Interval y_c{-250.0, 250.0};
  Interval mass{0.0, 5.0};

  Theta lower() const { return {x_c.lo, y_c.lo, mass.lo}; }
  Theta upper() const { return {x_c.hi, y_c.hi, mass.hi}; }
  bool contains(const Theta& t) const { return x_c.contains(t[0]) && y_c.contains(t[1]) && mass.contains(t[2]); }
  double log_volume() const;
};

/// Everything the forward model needs besides theta.
struct InferenceProblem {
  std::vector<double> observations;  // one count per detector
  std::vector<DetectorSpec> detectors;
  PhysicsConstants physics;
  double u = 0.0;
  double v = 0.0;
  double k_x = 5.0;
  double k_y = 5.0;
  double t_obs = 500.0;
  ParameterBounds bounds;
  GridConfig grid;

  Scenario scenario(const Theta& theta) const;
};

/// Expected counts per detector for theta (no Poisson draw), on a grid
/// recentered at theta's plume position.
Eigen::VectorXd forward_model(const Theta& theta, const InferenceProblem& p);

/// sum_i (y_i - f_i(theta))^2
double sum_squares(const Theta& theta, const InferenceProblem& p);

/// Gaussian log-likelihood from a precomputed SS plus the log of the uniform
/// prior density; -inf outside the box.
double log_posterior_from_ss(double ss, double sigma2, std::size_t n, bool in_bounds, double log_volume);
double log_posterior(const Theta& theta, double sigma2, const InferenceProblem& p);

struct GridSearchResult {
  Theta theta = Theta::Zero();
  double ss = 0.0;
  std::size_t evaluations = 0;
};

/// Minimizes SS over an nx x ny x nm lattice: x and y include both box
/// edges, mass values sit at the centers of nm equal cells.
GridSearchResult grid_search_init(const InferenceProblem& p, int nx = 21, int ny = 21, int nm = 20);

/// What the sampler sees: SS(theta), the observation count, and the prior box.
struct SamplerTarget {
  std::function<double(const Theta&)> sum_squares;
  std::size_t n_obs = 0;
  Theta lower;
  Theta upper;
};

SamplerTarget make_target(const InferenceProblem& p);

struct DramConfig {
  int iterations = 20000;
  int burn_in = 10000;
  int adapt_start = 500;
  int adapt_interval = 100;
  bool adapt = true;
  bool delayed_rejection = true;
  /// Second-stage covariance = dr_scale * first-stage covariance.
  double dr_scale = 0.2;
  Eigen::Matrix3d initial_cov = Eigen::Vector3d(25.0, 25.0, 0.0625).asDiagonal();
  double adapt_scale = 2.38 * 2.38 / 3.0;
  double cov_ridge = 1e-8;
  /// Inverse-gamma hyperparameters for sigma^2: prior weight n0 and prior
  /// value s0^2. A non-positive s0^2 means SS(theta_0) / n.
  bool update_sigma2 = true;
  double sigma2_prior_weight = 1.0;
  double sigma2_prior_value = 0.0;
  /// Starting sigma^2; non-positive means SS(theta_0) / n.
  double sigma2_initial = 0.0;
};

void validate(const DramConfig& cfg);

enum class Stage : int { rejected = 0, first = 1, second = 2 };

struct ChainSample {
  Theta theta;
  double sigma2 = 0.0;
  Stage stage = Stage::rejected;
  bool accepted = false;
};

struct Chain {
  std::vector<ChainSample> samples;
  std::uint64_t seed = 0;
  std::size_t accepted_first = 0;
  std::size_t accepted_second = 0;
  Theta start = Theta::Zero();

  double acceptance_rate() const;
};

/// First-stage acceptance probability of a symmetric proposal, from log
/// posterior values.
double metropolis_acceptance(double log_post_current, double log_post_proposal);

/// Delayed-rejection adaptive Metropolis from `start`.
Chain dram_run(const SamplerTarget& target, const Theta& start, const DramConfig& cfg, std::uint64_t seed);

/// Grid-search initialization followed by dram_run. Throws InferenceError
/// when the posterior is not finite at the starting point.
Chain dram_run(const InferenceProblem& p, const DramConfig& cfg, std::uint64_t seed);

struct ParameterSummary {
  double mean = 0.0;
  double sd = 0.0;
  double lo95 = 0.0;
  double hi95 = 0.0;
};

struct PosteriorSummary {
  std::array<ParameterSummary, 3> params;
  std::size_t samples = 0;
  double acceptance = 0.0;
};

/// Drops the first burn_in samples and summarizes the rest.
PosteriorSummary burn_and_summarize(const Chain& chain, std::size_t burn_in);

/// Samples after burn-in as an M x 3 matrix.
Eigen::MatrixXd chain_matrix(const Chain& chain, std::size_t burn_in);

}  // namespace ste::dram
