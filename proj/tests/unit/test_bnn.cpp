#include <gtest/gtest.h>

#include <cmath>

#include "ste/bnn.hpp"
#include "ste/error.hpp"
#include "ste/posterior.hpp"

namespace {

using namespace ste::bnn;
using ste::nn::Activation;

VariationalMlpModel toy(std::uint64_t seed, NoiseModel noise = NoiseModel::learned) {
  ste::Engine rng(seed);
  VariationalMlpModel m = make_variational_mlp({5, 4, 3}, {Activation::swish, Activation::linear}, rng, 0.3);
  m.noise = noise;
  m.log_noise_var << 0.2, -0.4, 0.1;
  Eigen::MatrixXd f = Eigen::MatrixXd::Random(50, 5), t = Eigen::MatrixXd::Random(50, 3);
  m.normalizer = {ste::ColumnScaler::fit(f), ste::ColumnScaler::fit(t)};
  return m;
}

// Single-weight model: 1 -> 1 linear, bias fixed at the prior.
VariationalMlpModel single_weight(double mu, double sigma) {
  ste::Engine rng(1);
  VariationalMlpModel m = make_variational_mlp({1, 1}, {Activation::linear}, rng, 1.0);
  m.layers[0].w_mu(0, 0) = mu;
  m.layers[0].w_rho(0, 0) = softplus_inverse(sigma);
  m.layers[0].b_mu(0) = 0.0;
  m.layers[0].b_rho(0) = softplus_inverse(1.0);
  return m;
}

TEST(Softplus, InverseRoundTrip) {
  for (double s : {1e-6, 0.05, 1.0, 7.5, 40.0}) EXPECT_NEAR(softplus(softplus_inverse(s)) / s, 1.0, 1e-12);
  EXPECT_NEAR(softplus(-800.0), 0.0, 1e-300);
  EXPECT_DOUBLE_EQ(softplus(800.0), 800.0);
  EXPECT_THROW(softplus_inverse(0.0), ste::DomainError);
}

TEST(Kl, ClosedFormValues) {
  EXPECT_NEAR(kl_to_prior(single_weight(0.0, 1.0)), 0.0, 1e-12);
  EXPECT_NEAR(kl_to_prior(single_weight(1.0, 1.0)), 0.5, 1e-12);
  EXPECT_NEAR(kl_to_prior(single_weight(0.0, 0.5)), 0.5 * (0.25 - 1 - std::log(0.25)), 1e-12);
  EXPECT_NEAR(kl_to_prior(single_weight(0.0, 0.5)), 0.3181, 1e-4);
}

TEST(Kl, GrowsWithAbsoluteMean) {
  double last = -1;
  for (double mu : {0.0, 0.5, 1.0, 2.0}) {
    const double kl = kl_to_prior(single_weight(-mu, 0.7));
    EXPECT_GT(kl, last);
    last = kl;
  }
}

TEST(Sampling, DegenerateSigmaReturnsMeans) {
  VariationalMlpModel m = toy(3);
  for (auto& l : m.layers) {
    l.w_rho.setConstant(-800.0);
    l.b_rho.setConstant(-800.0);
  }
  ste::Engine rng(4);
  const Realization r = sample_weights(m, rng);
  const auto mean = mean_network(m);
  for (std::size_t l = 0; l < m.layers.size(); ++l) EXPECT_EQ(r.network.layers[l].weights, mean.layers[l].weights);
  const std::vector<double> x{0.1, 0.2, -0.3, 0.4, 0.0};
  const Eigen::Vector3d p = predict_stochastic(m, x, rng);
  const Eigen::MatrixXd det = predict_mean(m, Eigen::Map<const Eigen::RowVectorXd>(x.data(), 5));
  EXPECT_NEAR((p - det.row(0).transpose()).norm(), 0.0, 1e-12);
}

TEST(Sampling, FixedSeedRepeatsAndMomentsMatch) {
  VariationalMlpModel m = single_weight(0.7, 0.2);
  ste::Engine a(5), b(5);
  EXPECT_EQ(sample_weights(m, a).network.layers[0].weights, sample_weights(m, b).network.layers[0].weights);
  const int n = 100'000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double w = sample_weights(m, a).network.layers[0].weights(0, 0);
    s += w;
    s2 += w * w;
  }
  const double mean = s / n, sd = std::sqrt(s2 / n - mean * mean);
  EXPECT_NEAR(mean, 0.7, 3 * 0.2 / std::sqrt(n));
  EXPECT_NEAR(sd, 0.2, 3 * 0.2 / std::sqrt(2.0 * n));
}

// Frozen-eps ELBO gradients against central differences in (mu, rho, log variance).
double elbo_gradient_error(NoiseModel noise) {
  VariationalMlpModel m = toy(21, noise);
  ste::Engine rng(22);
  const Realization r = sample_weights(m, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(7, 5);
  const Eigen::MatrixXd y = Eigen::MatrixXd::Random(7, 3);
  const std::size_t n_total = 40;
  VariationalGradients g;
  elbo_gradients(m, r, x, y, n_total, 1.0, g);
  auto value = [&](const VariationalMlpModel& mm) {
    const Realization rr = realize(mm, r.eps_w, r.eps_b);
    return elbo_loss_frozen(mm, rr, x, y, n_total).loss;
  };
  double worst = 0.0;
  auto check = [&](double& p, double analytic) {
    const double h = 1e-6, keep = p;
    p = keep + h;
    const double up = value(m);
    p = keep - h;
    const double down = value(m);
    p = keep;
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(fd - analytic) / std::max(1e-3, std::abs(fd) + std::abs(analytic)));
  };
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    auto& v = m.layers[l];
    for (Eigen::Index i = 0; i < v.w_mu.size(); ++i) {
      check(v.w_mu.data()[i], g.w_mu[l].data()[i]);
      check(v.w_rho.data()[i], g.w_rho[l].data()[i]);
    }
    for (Eigen::Index i = 0; i < v.b_mu.size(); ++i) {
      check(v.b_mu[i], g.b_mu[l][i]);
      check(v.b_rho[i], g.b_rho[l][i]);
    }
  }
  if (noise == NoiseModel::learned)
    for (Eigen::Index k = 0; k < 3; ++k) check(m.log_noise_var[k], g.log_noise_var[k]);
  return worst;
}

TEST(Elbo, GradientsMatchFiniteDifferences) {
  EXPECT_LT(elbo_gradient_error(NoiseModel::learned), 1e-4);
  EXPECT_LT(elbo_gradient_error(NoiseModel::fixed_unit), 1e-4);
}

TEST(Elbo, PriorMatchingParametersAddNoKl) {
  VariationalMlpModel m = toy(2);
  for (auto& l : m.layers) {
    l.w_mu.setZero();
    l.b_mu.setZero();
    l.w_rho.setConstant(softplus_inverse(1.0));
    l.b_rho.setConstant(softplus_inverse(1.0));
  }
  ste::Engine rng(1);
  const auto t = elbo_loss(m, Eigen::MatrixXd::Random(4, 5), Eigen::MatrixXd::Random(4, 3), rng, 10);
  EXPECT_NEAR(t.kl, 0.0, 1e-10);
  EXPECT_NEAR(t.loss, t.nll, 1e-10);
  EXPECT_DOUBLE_EQ(t.kl_weight, 0.4);
}

TEST(Elbo, SingleSampleEstimatorIsConsistent) {
  const VariationalMlpModel m = toy(6);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(8, 5), y = Eigen::MatrixXd::Random(8, 3);
  auto average = [&](int n, std::uint64_t base, double& se) {
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
      ste::Engine rng = ste::derive_engine(base, {std::uint64_t(i)});
      const double v = elbo_loss(m, x, y, rng, 100).loss;
      s += v;
      s2 += v * v;
    }
    const double mean = s / n;
    se = std::sqrt((s2 / n - mean * mean) / n);
    return mean;
  };
  double se_small = 0, se_big = 0;
  const double small = average(1000, 1, se_small);
  const double big = average(100000, 2, se_big);
  EXPECT_NEAR(small, big, 4.0 * std::hypot(se_small, se_big));
}

ste::Dataset synthetic(std::size_t n, std::uint64_t seed) {
  // Cheap stand-in for simulated data: counts carry a smooth signal of the targets.
  ste::Engine rng(seed);
  std::uniform_real_distribution<double> ux(-500, 0), uy(-250, 250), um(1, 5);
  ste::Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    ste::Record r;
    r.x_c = ux(rng);
    r.y_c = uy(rng);
    r.mass = um(rng);
    r.u = 2.0 + 2.0 * (i % 7) / 6.0;
    r.v = 0.1 * (i % 5);
    for (int k = 0; k < 18; ++k) {
      const double mean = 30 + 200 * r.mass * std::exp(-std::pow((r.y_c - 30.0 * (k - 9)) / 200.0, 2)) *
                                   (1.0 + (k % 3) * r.x_c / 1000.0);
      r.counts.push_back(std::max<std::int64_t>(1, std::llround(mean)));
    }
    d.rows.push_back(std::move(r));
  }
  return d;
}

TEST(Train, ProgressesAndIsDeterministic) {
  const auto d = synthetic(400, 1);
  const auto s = ste::split_dataset(d);
  BnnTrainConfig cfg;
  cfg.base.epochs = 30;
  cfg.base.batch_size = 32;
  cfg.base.seed = 5;
  const auto a = fit_bnn(s.train, s.val, cfg);
  const auto b = fit_bnn(s.train, s.val, cfg);
  EXPECT_LT(a.history.val_nll.back(), a.history.initial_val_nll);
  EXPECT_EQ(a.model.layers[0].w_mu, b.model.layers[0].w_mu);
  EXPECT_EQ(a.model.layers[1].w_rho, b.model.layers[1].w_rho);
}

TEST(Train, HeavyKlPullsTowardPrior) {
  const auto d = synthetic(200, 2);
  const auto s = ste::split_dataset(d);
  BnnTrainConfig cfg;
  cfg.base.epochs = 40;
  cfg.base.batch_size = 25;
  cfg.kl_scale = 1e6;
  cfg.base.optimizer.learning_rate = 1e-2;
  ste::Engine init = ste::derive_engine(cfg.base.seed, {ste::stream::init});
  const auto start = make_variational_model(init, 20, cfg.sigma0);
  const auto r = fit_bnn(s.train, s.val, cfg);
  const double mu_before = start.layers[1].w_mu.cwiseAbs().mean();
  const double mu_after = r.model.layers[1].w_mu.cwiseAbs().mean();
  const double sigma_after = softplus(r.model.layers[1].w_rho(0, 0));
  EXPECT_LT(mu_after, 0.5 * mu_before);
  EXPECT_GT(sigma_after, 0.05);
  EXPECT_LT(kl_to_prior(r.model), kl_to_prior(start));
}

class TrainedToy : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const auto d = synthetic(600, 3);
    const auto s = ste::split_dataset(d);
    BnnTrainConfig cfg;
    cfg.base.epochs = 20;
    cfg.base.batch_size = 32;
    model_ = new VariationalMlpModel(fit_bnn(s.train, s.val, cfg).model);
    test_ = new ste::Dataset(s.test);
  }
  static void TearDownTestSuite() {
    delete model_;
    delete test_;
  }
  static VariationalMlpModel* model_;
  static ste::Dataset* test_;
};
VariationalMlpModel* TrainedToy::model_ = nullptr;
ste::Dataset* TrainedToy::test_ = nullptr;

TEST_F(TrainedToy, StochasticPredictionsDifferAcrossSeeds) {
  const Eigen::MatrixXd x = test_->features().topRows(1);
  const std::vector<double> f(x.data(), x.data() + x.size());
  ste::Engine a(1), b(2);
  EXPECT_NE(predict_stochastic(*model_, f, a), predict_stochastic(*model_, f, b));
}

TEST_F(TrainedToy, RowSamplesMatchFullWeightDrawsInDistribution) {
  // sample_predictions draws pre-activations; compare with whole-network draws.
  const Eigen::MatrixXd x = test_->features().topRows(1);
  const std::vector<double> f(x.data(), x.data() + x.size());
  const int n = 20000;
  const auto fast = epistemic_density(*model_, f, n, 9).samples;
  Eigen::MatrixXd slow(n, 3);
  ste::Engine rng(10);
  for (int i = 0; i < n; ++i) slow.row(i) = predict_stochastic(*model_, f, rng).transpose();
  for (int c = 0; c < 3; ++c) {
    const auto a = ste::posterior::describe(std::span(fast.col(c).data(), n));
    const auto b = ste::posterior::describe(std::span(slow.col(c).data(), n));
    EXPECT_NEAR(a.mean, b.mean, 4 * std::hypot(a.sd, b.sd) / std::sqrt(n));
    EXPECT_NEAR(a.sd / b.sd, 1.0, 0.04);
  }
}

TEST_F(TrainedToy, EpistemicDensityShapeAndSpread) {
  const Eigen::MatrixXd x = test_->features().topRows(1);
  const std::vector<double> f(x.data(), x.data() + x.size());
  EXPECT_EQ(epistemic_density(*model_, f, 1, 3).samples.rows(), 1);
  const auto set = epistemic_density(*model_, f, 2000, 3);
  EXPECT_EQ(set.tag, "epistemic");
  for (int c = 0; c < 3; ++c) {
    const Eigen::VectorXd col = set.samples.col(c);
    EXPECT_GT((col.array() - col.mean()).square().sum(), 0.0);
  }
  const auto again = epistemic_density(*model_, f, 2000, 3);
  EXPECT_EQ(set.samples, again.samples);
  EXPECT_THROW(epistemic_density(*model_, f, 0, 3), ste::ConfigError);
}

TEST_F(TrainedToy, MeanOfManyDrawsStabilizes) {
  const Eigen::MatrixXd x = test_->features().topRows(1);
  const std::vector<double> f(x.data(), x.data() + x.size());
  const auto set = epistemic_density(*model_, f, 100000, 4);
  for (int c = 0; c < 3; ++c) {
    const auto st = ste::posterior::describe(std::span(set.samples.col(c).data(), set.samples.rows()));
    EXPECT_LT(st.sd / std::sqrt(double(st.n)), 0.01 * st.sd);
  }
}

TEST_F(TrainedToy, CombinedIsWiderThanEpistemicAndReuseCollapses) {
  std::vector<double> means;
  for (auto c : test_->rows[0].counts) means.push_back(static_cast<double>(c));
  const double u = test_->rows[0].u, v = test_->rows[0].v;
  const auto combined = combined_density(*model_, means, u, v, 500, 5000, 12);
  EXPECT_EQ(combined.tag, "epistemic+aleatoric");
  const auto reused = combined_density(*model_, means, u, v, 500, 5000, 12, {.reuse_measurement = true});
  // With one shared measurement the draws are the epistemic density of that measurement.
  const std::uint64_t mseed = ste::derive_engine(12, {ste::stream::measurement, 0})();
  const auto f = ste::make_features(ste::sample_measurement(means, mseed, 500), u, v);
  const auto epi = epistemic_density(*model_, f, 5000, 12);
  EXPECT_EQ(reused.samples, epi.samples);
  for (int c = 0; c < 3; ++c) {
    const auto wide = ste::posterior::describe(std::span(combined.samples.col(c).data(), 5000));
    const auto narrow = ste::posterior::describe(std::span(epi.samples.col(c).data(), 5000));
    EXPECT_GE(wide.variance, narrow.variance * 0.95);
  }
}

TEST_F(TrainedToy, StochasticEvaluationIsStable) {
  const auto a = evaluate_stochastic(*model_, *test_, 1);
  const auto b = evaluate_stochastic(*model_, *test_, 2);
  const auto again = evaluate_stochastic(*model_, *test_, 1);
  EXPECT_EQ(a.location_error, again.location_error);
  EXPECT_NE(a.location_error, b.location_error);
  EXPECT_GT(a.location_error, 0.0);
}

}  // namespace
