#include "ste/dram.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "ste/error.hpp"
#include "ste/parallel.hpp"
#include "ste/posterior.hpp"

namespace ste::dram {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

double ParameterBounds::log_volume() const { return std::log(x_c.width() * y_c.width() * mass.width()); }

Scenario InferenceProblem::scenario(const Theta& theta) const {
  Scenario s;
  s.x_c = theta[0];
  s.y_c = theta[1];
  s.mass = theta[2];
  s.u = u;
  s.v = v;
  s.k_x = k_x;
  s.k_y = k_y;
  s.t_obs = t_obs;
  return s;
}

Eigen::VectorXd forward_model(const Theta& theta, const InferenceProblem& p) {
  const auto means = expected_array(p.scenario(theta), p.detectors, p.physics, p.grid);
  return Eigen::Map<const Eigen::VectorXd>(means.data(), static_cast<Eigen::Index>(means.size()));
}

double sum_squares(const Theta& theta, const InferenceProblem& p) {
  if (p.observations.size() != p.detectors.size()) throw ConfigError("observation count does not match detector count");
  const Eigen::VectorXd f = forward_model(theta, p);
  const Eigen::Map<const Eigen::VectorXd> y(p.observations.data(), static_cast<Eigen::Index>(p.observations.size()));
  return (y - f).squaredNorm();
}

double log_posterior_from_ss(double ss, double sigma2, std::size_t n, bool in_bounds, double log_volume) {
  if (!(sigma2 > 0.0)) throw DomainError("sigma^2 must be positive");
  if (!in_bounds) return kNegInf;
  return -0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi * sigma2) - ss / (2.0 * sigma2) - log_volume;
}

double log_posterior(const Theta& theta, double sigma2, const InferenceProblem& p) {
  if (!(sigma2 > 0.0)) throw DomainError("sigma^2 must be positive");
  if (!p.bounds.contains(theta)) return kNegInf;
  return log_posterior_from_ss(sum_squares(theta, p), sigma2, p.observations.size(), true, p.bounds.log_volume());
}

GridSearchResult grid_search_init(const InferenceProblem& p, int nx, int ny, int nm) {
  if (nx < 2 || ny < 2 || nm < 1) throw ConfigError("grid search needs at least 2 x 2 x 1 points");
  if (p.observations.size() != p.detectors.size()) throw ConfigError("observation count does not match detector count");
  const auto& b = p.bounds;
  const Eigen::Map<const Eigen::VectorXd> y(p.observations.data(), static_cast<Eigen::Index>(p.observations.size()));

  Eigen::VectorXd background(static_cast<Eigen::Index>(p.detectors.size()));
  for (std::size_t k = 0; k < p.detectors.size(); ++k) {
    background[static_cast<Eigen::Index>(k)] = p.detectors[k].background_rate * p.detectors[k].dwell_time;
  }

  // The response is affine in mass, so one unit-mass evaluation per (x, y)
  // node covers the whole mass axis.
  std::vector<GridSearchResult> best(static_cast<std::size_t>(nx) * ny);
  parallel_for(best.size(), [&](std::size_t idx) {
    const int i = static_cast<int>(idx) / ny;
    const int j = static_cast<int>(idx) % ny;
    const double x = b.x_c.lo + i * b.x_c.width() / (nx - 1);
    const double yc = b.y_c.lo + j * b.y_c.width() / (ny - 1);
    const Eigen::VectorXd unit = forward_model(Theta(x, yc, 1.0), p) - background;
    GridSearchResult r;
    r.ss = std::numeric_limits<double>::infinity();
    for (int k = 0; k < nm; ++k) {
      const double mass = b.mass.lo + (k + 0.5) * b.mass.width() / nm;
      const double ss = (y - background - mass * unit).squaredNorm();
      if (ss < r.ss) {
        r.ss = ss;
        r.theta = Theta(x, yc, mass);
      }
    }
    best[idx] = r;
  });

  GridSearchResult out = best.front();
  for (const auto& r : best) {
    if (r.ss < out.ss) out = r;
  }
  out.evaluations = static_cast<std::size_t>(nx) * ny * nm;
  return out;
}

SamplerTarget make_target(const InferenceProblem& p) {
  SamplerTarget t;
  t.sum_squares = [&p](const Theta& theta) { return sum_squares(theta, p); };
  t.n_obs = p.observations.size();
  t.lower = p.bounds.lower();
  t.upper = p.bounds.upper();
  return t;
}

void validate(const DramConfig& cfg) {
  if (cfg.iterations < 1) throw ConfigError("DRAM needs at least one iteration");
  if (cfg.burn_in < 0 || cfg.burn_in >= cfg.iterations) throw ConfigError("burn-in must be in [0, iterations)");
  if (cfg.adapt_interval < 1 || cfg.adapt_start < 1) throw ConfigError("adaptation start and interval must be positive");
  if (!(cfg.dr_scale > 0.0)) throw ConfigError("delayed-rejection scale must be positive");
  if (cfg.initial_cov.llt().info() != Eigen::Success) throw ConfigError("initial proposal covariance is not positive definite");
}

double Chain::acceptance_rate() const {
  return samples.empty() ? 0.0 : static_cast<double>(accepted_first + accepted_second) / samples.size();
}

double metropolis_acceptance(double log_post_current, double log_post_proposal) {
  if (log_post_proposal == kNegInf) return 0.0;
  return std::min(1.0, std::exp(log_post_proposal - log_post_current));
}

namespace {

/// Running mean and covariance of the chain history.
class RunningCovariance {
 public:
  void add(const Theta& x) {
    ++n_;
    const Theta delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_).transpose();
  }
  std::size_t count() const { return n_; }
  Eigen::Matrix3d covariance() const { return m2_ / static_cast<double>(n_ - 1); }

 private:
  std::size_t n_ = 0;
  Theta mean_ = Theta::Zero();
  Eigen::Matrix3d m2_ = Eigen::Matrix3d::Zero();
};

}  // namespace

Chain dram_run(const SamplerTarget& target, const Theta& start, const DramConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  auto in_bounds = [&](const Theta& t) {
    return (t.array() >= target.lower.array()).all() && (t.array() <= target.upper.array()).all();
  };
  if (!in_bounds(start)) throw InferenceError("chain start lies outside the prior bounds");

  Engine rng = derive_engine(seed, {stream::chain});
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto draw = [&] { return Theta(n01(rng), n01(rng), n01(rng)); };

  const double n = static_cast<double>(target.n_obs);
  Theta current = start;
  double ss_current = target.sum_squares(current);
  if (!std::isfinite(ss_current)) throw InferenceError("non-finite posterior at the chain start");

  const double s0 = cfg.sigma2_prior_value > 0.0 ? cfg.sigma2_prior_value : std::max(ss_current / n, 1e-12);
  double sigma2 = cfg.sigma2_initial > 0.0 ? cfg.sigma2_initial : std::max(ss_current / n, 1e-12);

  Eigen::Matrix3d cov = cfg.initial_cov;
  Eigen::Matrix3d chol = cov.llt().matrixL();
  Eigen::Matrix3d cov_inv = cov.inverse();
  const double dr_factor = std::sqrt(cfg.dr_scale);

  // Log target with sigma^2 held at its current value; prior is flat inside the box.
  auto log_target = [&](double ss) { return -ss / (2.0 * sigma2); };

  Chain chain;
  chain.seed = seed;
  chain.start = start;
  chain.samples.reserve(static_cast<std::size_t>(cfg.iterations));
  RunningCovariance history;

  for (int it = 0; it < cfg.iterations; ++it) {
    ChainSample sample;
    const double lp_current = log_target(ss_current);

    const Theta y1 = current + chol * draw();
    double ss1 = std::numeric_limits<double>::infinity();
    double lp1 = kNegInf;
    if (in_bounds(y1)) {
      ss1 = target.sum_squares(y1);
      lp1 = log_target(ss1);
    }
    const double alpha1 = metropolis_acceptance(lp_current, lp1);

    if (u01(rng) < alpha1) {
      current = y1;
      ss_current = ss1;
      sample.stage = Stage::first;
      sample.accepted = true;
      ++chain.accepted_first;
    } else if (cfg.delayed_rejection) {
      const Theta y2 = current + dr_factor * (chol * draw());
      if (in_bounds(y2)) {
        const double ss2 = target.sum_squares(y2);
        const double lp2 = log_target(ss2);
        const double alpha_back = metropolis_acceptance(lp2, lp1);
        if (alpha_back < 1.0) {
          auto log_q1 = [&](const Theta& from, const Theta& to) {
            const Theta d = to - from;
            return -0.5 * d.dot(cov_inv * d);
          };
          const double log_num = lp2 + log_q1(y2, y1) + std::log1p(-alpha_back);
          const double log_den = lp_current + log_q1(current, y1) + std::log1p(-alpha1);
          const double alpha2 = std::min(1.0, std::exp(log_num - log_den));
          if (u01(rng) < alpha2) {
            current = y2;
            ss_current = ss2;
            sample.stage = Stage::second;
            sample.accepted = true;
            ++chain.accepted_second;
          }
        }
      }
    }

    if (cfg.update_sigma2) {
      const double shape = 0.5 * (cfg.sigma2_prior_weight + n);
      const double rate = 0.5 * (cfg.sigma2_prior_weight * s0 + ss_current);
      std::gamma_distribution<double> precision(shape, 1.0 / rate);
      sigma2 = 1.0 / precision(rng);
    }

    sample.theta = current;
    sample.sigma2 = sigma2;
    chain.samples.push_back(sample);
    history.add(current);

    const int count = it + 1;
    if (cfg.adapt && count >= cfg.adapt_start && (count - cfg.adapt_start) % cfg.adapt_interval == 0) {
      const Eigen::Matrix3d proposal =
          cfg.adapt_scale * (history.covariance() + cfg.cov_ridge * Eigen::Matrix3d::Identity());
      Eigen::LLT<Eigen::Matrix3d> llt(proposal);
      if (llt.info() == Eigen::Success) {
        cov = proposal;
        chol = llt.matrixL();
        cov_inv = cov.inverse();
      }
    }
  }
  return chain;
}

Chain dram_run(const InferenceProblem& p, const DramConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  const GridSearchResult init = grid_search_init(p);
  if (!std::isfinite(init.ss)) throw InferenceError("grid search produced a non-finite sum of squares");
  return dram_run(make_target(p), init.theta, cfg, seed);
}

Eigen::MatrixXd chain_matrix(const Chain& chain, std::size_t burn_in) {
  if (burn_in >= chain.samples.size()) throw ConfigError("burn-in must be shorter than the chain");
  const std::size_t m = chain.samples.size() - burn_in;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(m), 3);
  for (std::size_t i = 0; i < m; ++i) out.row(static_cast<Eigen::Index>(i)) = chain.samples[burn_in + i].theta.transpose();
  return out;
}

PosteriorSummary burn_and_summarize(const Chain& chain, std::size_t burn_in) {
  const Eigen::MatrixXd kept = chain_matrix(chain, burn_in);
  PosteriorSummary s;
  s.samples = static_cast<std::size_t>(kept.rows());
  std::size_t accepted = 0;
  for (std::size_t i = burn_in; i < chain.samples.size(); ++i) accepted += chain.samples[i].accepted ? 1 : 0;
  s.acceptance = static_cast<double>(accepted) / static_cast<double>(s.samples);
  for (int c = 0; c < 3; ++c) {
    const std::vector<double> col(kept.col(c).data(), kept.col(c).data() + kept.rows());
    const auto st = posterior::describe(col);
    const auto ci = posterior::credible_interval(col, 0.95);
    s.params[c] = {st.mean, st.sd, ci.lo, ci.hi};
  }
  return s;
}

}  // namespace ste::dram
