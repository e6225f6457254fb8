#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "ste/error.hpp"
#include "ste/nn.hpp"

namespace {

using namespace ste::nn;

TEST(Swish, Values) {
  EXPECT_EQ(swish(0.0), 0.0);
  EXPECT_NEAR(swish(10.0), 9.99955, 1e-5);
  EXPECT_NEAR(swish(-10.0), -4.54e-4, 1e-6);
  for (double x : {-3.0, -0.5, 0.0, 0.7, 4.0}) {
    const double h = 1e-6;
    EXPECT_NEAR(swish_derivative(x), (swish(x + h) - swish(x - h)) / (2 * h), 1e-8);
  }
}

TEST(Softmax, Values) {
  const Eigen::VectorXd u = softmax(Eigen::VectorXd::Zero(100));
  for (double p : u) EXPECT_NEAR(p, 0.01, 1e-15);
  Eigen::VectorXd v(2);
  v << std::log(2.0), 0.0;
  const Eigen::VectorXd p = softmax(v);
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
  Eigen::VectorXd w = Eigen::VectorXd::LinSpaced(7, -3, 5);
  const Eigen::VectorXd shifted = softmax((w.array() + 123.4).matrix());
  EXPECT_LE((softmax(w) - shifted).cwiseAbs().maxCoeff(), 1e-12);
  w[0] = 1000.0;  // no overflow
  EXPECT_NEAR(softmax(w).sum(), 1.0, 1e-12);
}

TEST(Forward, ZeroWeightsGiveBiases) {
  ste::Engine rng(1);
  MlpModel m = make_mlp({4, 3}, {Activation::linear}, rng);
  m.layers[0].weights.setZero();
  m.layers[0].biases << 1, -2, 3;
  const Eigen::MatrixXd out = forward(m, Eigen::MatrixXd::Random(2, 4));
  EXPECT_EQ(out(1, 0), 1.0);
  EXPECT_EQ(out(0, 1), -2.0);
}

TEST(Forward, SingleSwishPathAtZero) {
  ste::Engine rng(1);
  MlpModel m = make_mlp({1, 1, 1}, {Activation::swish, Activation::swish}, rng);
  for (auto& l : m.layers) l.weights.setOnes();
  EXPECT_EQ(forward(m, Eigen::MatrixXd::Zero(1, 1))(0, 0), 0.0);
}

TEST(Forward, PureAndWidthChecked) {
  ste::Engine rng(5);
  const MlpModel m = make_regression_model(rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 20);
  EXPECT_EQ(forward(m, x), forward(m, x));
  EXPECT_THROW(forward(m, Eigen::MatrixXd::Zero(1, 19)), ste::ConfigError);
  EXPECT_EQ(m.parameter_count(), 20u * 150 + 150 + 150 * 200 + 200 + 200 * 3 + 3);
}

TEST(Init, HeUniformLimits) {
  ste::Engine rng(8);
  const MlpModel m = make_regression_model(rng);
  EXPECT_LE(m.layers[0].weights.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 20));
  EXPECT_LE(m.layers[1].weights.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 150));
  EXPECT_GT(m.layers[1].weights.cwiseAbs().maxCoeff(), 0.9 * std::sqrt(6.0 / 150));
  EXPECT_EQ(m.layers[2].biases.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Loss, Mae) {
  Eigen::MatrixXd y(1, 3), p(1, 3);
  y << 1, 2, 3;
  p << 2, 4, 6;
  EXPECT_DOUBLE_EQ(mae_loss(y, y), 0.0);
  EXPECT_DOUBLE_EQ(mae_loss(y, p), 2.0);
  Eigen::MatrixXd a = Eigen::MatrixXd::Random(5, 3), b = Eigen::MatrixXd::Random(5, 3);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(5);
  perm.indices() << 3, 0, 4, 1, 2;
  EXPECT_NEAR(mae_loss(a, b), mae_loss(perm * a, perm * b), 1e-15);
}

TEST(Loss, Cce) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(1, 200);
  y(0, 7) = 1;
  y(0, 150) = 1;
  EXPECT_NEAR(cce_loss(y, y), 0.0, 1e-12);
  const Eigen::MatrixXd uniform = Eigen::MatrixXd::Constant(1, 200, 0.01);
  EXPECT_NEAR(cce_loss(y, uniform), 2 * std::log(100.0), 1e-12);
  Eigen::MatrixXd better = uniform;
  better(0, 7) = 0.02;
  better(0, 8) = 0.0;
  EXPECT_LT(cce_loss(y, better), cce_loss(y, uniform));
}

TEST(Bins, MidpointsAndExpectation) {
  const BinGrid bx = default_x_bins();
  EXPECT_DOUBLE_EQ(bx.width(), 5.0);
  std::vector<double> p(100, 0.0);
  p[17] = 1.0;
  EXPECT_DOUBLE_EQ(binned_expectation(p, bx), bx.midpoint(17));
  std::fill(p.begin(), p.end(), 0.01);
  EXPECT_NEAR(binned_expectation(p, bx), -250.0, 1e-10);
  std::fill(p.begin(), p.end(), 0.0);
  p[10] = p[89] = 0.3;
  p[40] = p[59] = 0.2;
  EXPECT_NEAR(binned_expectation(p, default_y_bins()), 0.0, 1e-12);
  EXPECT_EQ(bx.index(-500.0), 0);
  EXPECT_EQ(bx.index(0.0), 99);
  EXPECT_EQ(bx.index(-2.5), 99);
  EXPECT_EQ(bx.index(-497.0), 0);
}

// Central differences over every parameter of a small model.
double max_relative_gradient_error(MlpModel m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, LossKind loss) {
  Gradients g;
  loss_gradients(m, x, y, loss, g);
  auto value = [&](const MlpModel& mm) {
    const Eigen::MatrixXd out = forward(mm, x);
    return loss == LossKind::mae ? mae_loss(y, out) : cce_loss(y, out);
  };
  const double h = 1e-6;
  double worst = 0.0;
  auto params = parameter_refs(m);
  auto grads = parameter_refs(g);
  for (std::size_t b = 0; b < params.size(); ++b) {
    for (Eigen::Index i = 0; i < params[b].size; ++i) {
      double& w = params[b].data[i];
      const double keep = w;
      w = keep + h;
      const double up = value(m);
      w = keep - h;
      const double down = value(m);
      w = keep;
      const double fd = (up - down) / (2 * h);
      const double an = grads[b].data[i];
      worst = std::max(worst, std::abs(fd - an) / std::max(1e-3, std::abs(fd) + std::abs(an)));
    }
  }
  return worst;
}

TEST(Backward, MaeMatchesFiniteDifferences) {
  ste::Engine rng(11);
  const MlpModel m = make_mlp({20, 5, 3}, {Activation::swish, Activation::linear}, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(6, 20);
  // Targets far from the outputs keep every residual away from the kink.
  const Eigen::MatrixXd y = forward(m, x).array() + 5.0 * (Eigen::ArrayXXd::Random(6, 3).sign() + 0.1);
  EXPECT_LT(max_relative_gradient_error(m, x, y, LossKind::mae), 1e-5);
}

TEST(Backward, CceMatchesFiniteDifferences) {
  ste::Engine rng(12);
  MlpModel m = make_mlp({20, 5, 8}, {Activation::swish, Activation::softmax}, rng);
  m.softmax_blocks = 2;
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 20);
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(5, 8);
  for (int r = 0; r < 5; ++r) {
    y(r, r % 4) = 1;
    y(r, 4 + (r * 3) % 4) = 1;
  }
  EXPECT_LT(max_relative_gradient_error(m, x, y, LossKind::cce), 1e-5);
}

TEST(Backward, DeepRegressionStackMatchesFiniteDifferences) {
  ste::Engine rng(13);
  const MlpModel m = make_mlp({6, 7, 5, 3}, {Activation::swish, Activation::swish, Activation::linear}, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 6);
  const Eigen::MatrixXd y = forward(m, x).array() + 3.0;
  EXPECT_LT(max_relative_gradient_error(m, x, y, LossKind::mae), 1e-5);
}

TEST(Backward, SoftmaxGradientIsProbsMinusOnehot) {
  Eigen::MatrixXd p(1, 3), y(1, 3), grad;
  p << 0.2, 0.5, 0.3;
  y << 0, 1, 0;
  loss_and_gradient(LossKind::cce, p, y, grad);
  EXPECT_NEAR(grad(0, 0), 0.2, 1e-15);
  EXPECT_NEAR(grad(0, 1), -0.5, 1e-15);
}

TEST(Backward, ZeroMaeResidualGivesZeroGradient) {
  ste::Engine rng(2);
  const MlpModel m = make_mlp({4, 3, 2}, {Activation::swish, Activation::linear}, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 4);
  Gradients g;
  loss_gradients(m, x, forward(m, x), LossKind::mae, g);
  for (const auto& w : g.weights) EXPECT_EQ(w.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Nadam, ZeroGradientLeavesParameters) {
  Eigen::VectorXd p = Eigen::VectorXd::Constant(3, 1.5), g = Eigen::VectorXd::Zero(3);
  Nadam opt;
  const ParamRef pr{p.data(), 3}, gr{g.data(), 3};
  opt.step(std::span(&pr, 1), std::span(&gr, 1));
  EXPECT_EQ(p, Eigen::VectorXd::Constant(3, 1.5));
}

TEST(Nadam, FirstStepMagnitudeIndependentOfGradientScale) {
  // m_hat / sqrt(v_hat) on step one: b1 (1 - b1) / (1 - b1^2) + 1.
  const double b1 = 0.9;
  const double expected = b1 * (1 - b1) / (1 - b1 * b1) + 1.0;
  EXPECT_NEAR(expected, 1.47368, 1e-5);
  for (double scale : {1e-3, 1.0, 250.0}) {
    double p = 0.0, g = scale;
    Nadam opt;
    const ParamRef pr{&p, 1}, gr{&g, 1};
    opt.step(std::span(&pr, 1), std::span(&gr, 1));
    EXPECT_NEAR(-p / 1e-3, expected, 1e-4);
  }
}

TEST(Train, DeterministicAndOverfitsTinySet) {
  ste::Engine rng(4);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(100, 20);
  const Eigen::MatrixXd y = (x.leftCols(3).array().sin() * 2.0).matrix();
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.seed = 3;
  MlpModel a = make_regression_model(rng);
  MlpModel b = a;
  const auto ha = train_arrays(a, LossKind::mae, x, y, {}, {}, cfg);
  const auto hb = train_arrays(b, LossKind::mae, x, y, {}, {}, cfg);
  EXPECT_EQ(ha.train_loss, hb.train_loss);
  EXPECT_EQ(a.layers[1].weights, b.layers[1].weights);
  EXPECT_LE(ha.train_loss.back(), 0.5 * ha.train_loss.front());
}

TEST(Train, NonFiniteLossIsATrainingError) {
  ste::Engine rng(4);
  MlpModel m = make_mlp({2, 2}, {Activation::linear}, rng);
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(4, 2), y = Eigen::MatrixXd::Zero(4, 2);
  x(0, 0) = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.epochs = 1;
  EXPECT_THROW(train_arrays(m, LossKind::mae, x, y, {}, {}, cfg), ste::TrainingError);
}

TEST(Score, PerfectPredictor) {
  Eigen::MatrixXd t(2, 3);
  t << -100, 10, 2, -300, -40, 4;
  const Metrics m = score(t, t);
  EXPECT_EQ(m.location_error, 0.0);
  EXPECT_EQ(m.mass_mae, 0.0);
  const Metrics loc_only = score(t.leftCols(2), t);
  EXPECT_TRUE(std::isnan(loc_only.mass_mae));
  Eigen::MatrixXd p = t;
  p(0, 0) += 3;
  p(0, 1) += 4;
  EXPECT_DOUBLE_EQ(score(p, t).location_error, 2.5);
}

}  // namespace
