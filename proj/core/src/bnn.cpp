#include "ste/bnn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "ste/error.hpp"

namespace ste::bnn {

double softplus(double rho) { return std::max(rho, 0.0) + std::log1p(std::exp(-std::abs(rho))); }

double softplus_inverse(double sigma) {
  if (!(sigma > 0.0)) throw DomainError("softplus inverse needs a positive argument");
  return sigma > 30.0 ? sigma + std::log(-std::expm1(-sigma)) : std::log(std::expm1(sigma));
}

namespace {

Eigen::ArrayXXd softplus(const Eigen::ArrayXXd& rho) {
  return rho.max(0.0) + (-rho.abs()).exp().log1p();
}

Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& rho) { return 1.0 / (1.0 + (-rho).exp()); }

double kl_terms(const Eigen::ArrayXXd& mu, const Eigen::ArrayXXd& sigma) {
  return 0.5 * (mu.square() + sigma.square() - 1.0 - 2.0 * sigma.log()).sum();
}

void fill_normal(Eigen::MatrixXd& m, Engine& rng) {
  std::normal_distribution<double> n01;
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n01(rng);
}

void fill_normal(Eigen::VectorXd& v, Engine& rng) {
  std::normal_distribution<double> n01;
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = n01(rng);
}

}  // namespace

std::size_t VariationalMlpModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.w_mu.size() + l.b_mu.size());
  return n;
}

VariationalMlpModel make_variational_mlp(const std::vector<int>& widths, const std::vector<nn::Activation>& activations,
                                         Engine& rng, double sigma0) {
  const nn::MlpModel init = nn::make_mlp(widths, activations, rng);
  const double rho0 = softplus_inverse(sigma0);
  VariationalMlpModel m;
  for (const auto& l : init.layers) {
    VariationalLayer v;
    v.w_mu = l.weights;
    v.w_rho = Eigen::MatrixXd::Constant(l.weights.rows(), l.weights.cols(), rho0);
    v.b_mu = l.biases;
    v.b_rho = Eigen::VectorXd::Constant(l.biases.size(), rho0);
    v.activation = l.activation;
    m.layers.push_back(std::move(v));
  }
  m.log_noise_var = Eigen::VectorXd::Zero(widths.back());
  return m;
}

VariationalMlpModel make_variational_model(Engine& rng, int inputs, double sigma0) {
  using nn::Activation;
  return make_variational_mlp({inputs, 150, 200, 3}, {Activation::swish, Activation::swish, Activation::linear}, rng,
                              sigma0);
}

Realization realize(const VariationalMlpModel& m, std::vector<Eigen::MatrixXd> eps_w, std::vector<Eigen::VectorXd> eps_b) {
  if (eps_w.size() != m.layers.size() || eps_b.size() != m.layers.size()) throw ConfigError("noise record does not match model");
  Realization r;
  r.network.kind = nn::OutputKind::regression;
  r.network.normalizer = m.normalizer;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& v = m.layers[l];
    nn::DenseLayer d;
    d.weights = (v.w_mu.array() + softplus(v.w_rho.array()) * eps_w[l].array()).matrix();
    d.biases = (v.b_mu.array() + softplus(Eigen::ArrayXXd(v.b_rho.array())).col(0) * eps_b[l].array()).matrix();
    d.activation = v.activation;
    r.network.layers.push_back(std::move(d));
  }
  r.eps_w = std::move(eps_w);
  r.eps_b = std::move(eps_b);
  return r;
}

Realization sample_weights(const VariationalMlpModel& m, Engine& rng) {
  std::vector<Eigen::MatrixXd> eps_w(m.layers.size());
  std::vector<Eigen::VectorXd> eps_b(m.layers.size());
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    eps_w[l].resize(m.layers[l].w_mu.rows(), m.layers[l].w_mu.cols());
    eps_b[l].resize(m.layers[l].b_mu.size());
    fill_normal(eps_w[l], rng);
    fill_normal(eps_b[l], rng);
  }
  return realize(m, std::move(eps_w), std::move(eps_b));
}

nn::MlpModel mean_network(const VariationalMlpModel& m) {
  nn::MlpModel net;
  net.kind = nn::OutputKind::regression;
  net.normalizer = m.normalizer;
  for (const auto& v : m.layers) net.layers.push_back({v.w_mu, v.b_mu, v.activation});
  return net;
}

double kl_to_prior(const VariationalMlpModel& m) {
  double kl = 0.0;
  for (const auto& v : m.layers) {
    kl += kl_terms(v.w_mu.array(), softplus(v.w_rho.array()));
    kl += kl_terms(Eigen::ArrayXXd(v.b_mu.array()), softplus(Eigen::ArrayXXd(v.b_rho.array())));
  }
  return kl;
}

double gaussian_nll(const VariationalMlpModel& m, const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw ConfigError("NLL shape mismatch");
  const double log2pi = std::log(2.0 * std::numbers::pi);
  double nll = 0.0;
  for (Eigen::Index k = 0; k < pred.cols(); ++k) {
    const double logvar = m.noise == NoiseModel::learned ? m.log_noise_var[k] : 0.0;
    const double sq = (pred.col(k) - target.col(k)).squaredNorm();
    nll += 0.5 * (sq * std::exp(-logvar) + static_cast<double>(pred.rows()) * (logvar + log2pi));
  }
  return nll;
}

ElboTerms elbo_loss_frozen(const VariationalMlpModel& m, const Realization& r, const Eigen::MatrixXd& x,
                           const Eigen::MatrixXd& y, std::size_t n_total, double kl_scale) {
  if (n_total == 0) throw ConfigError("n_total must be positive");
  ElboTerms t;
  t.nll = gaussian_nll(m, nn::forward(r.network, x), y);
  t.kl = kl_to_prior(m);
  t.kl_weight = kl_scale * static_cast<double>(x.rows()) / static_cast<double>(n_total);
  t.loss = t.nll + t.kl_weight * t.kl;
  return t;
}

ElboTerms elbo_loss(const VariationalMlpModel& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, Engine& rng,
                    std::size_t n_total, double kl_scale) {
  return elbo_loss_frozen(m, sample_weights(m, rng), x, y, n_total, kl_scale);
}

double elbo_gradients(const VariationalMlpModel& m, const Realization& r, const Eigen::MatrixXd& x,
                      const Eigen::MatrixXd& y, std::size_t n_total, double kl_scale, VariationalGradients& out) {
  nn::ForwardCache cache;
  const Eigen::MatrixXd pred = nn::forward(r.network, x, cache);

  Eigen::MatrixXd grad_pre = pred - y;
  Eigen::VectorXd inv_var = Eigen::VectorXd::Ones(pred.cols());
  if (m.noise == NoiseModel::learned) inv_var = (-m.log_noise_var.array()).exp().matrix();
  grad_pre = grad_pre * inv_var.asDiagonal();
  const nn::Gradients g = nn::backward(r.network, cache, grad_pre);

  const double klw = kl_scale * static_cast<double>(x.rows()) / static_cast<double>(n_total);
  const std::size_t n = m.layers.size();
  out.w_mu.resize(n);
  out.w_rho.resize(n);
  out.b_mu.resize(n);
  out.b_rho.resize(n);
  for (std::size_t l = 0; l < n; ++l) {
    const auto& v = m.layers[l];
    {
      const Eigen::ArrayXXd sig = softplus(v.w_rho.array());
      const Eigen::ArrayXXd dsig = sigmoid(v.w_rho.array());
      out.w_mu[l] = (g.weights[l].array() + klw * v.w_mu.array()).matrix();
      out.w_rho[l] = ((g.weights[l].array() * r.eps_w[l].array() + klw * (sig - 1.0 / sig)) * dsig).matrix();
    }
    {
      const Eigen::ArrayXXd rho = v.b_rho.array();
      const Eigen::ArrayXd sig = softplus(rho).col(0);
      const Eigen::ArrayXd dsig = sigmoid(rho).col(0);
      out.b_mu[l] = (g.biases[l].array() + klw * v.b_mu.array()).matrix();
      out.b_rho[l] = ((g.biases[l].array() * r.eps_b[l].array() + klw * (sig - 1.0 / sig)) * dsig).matrix();
    }
  }

  out.log_noise_var = Eigen::VectorXd::Zero(pred.cols());
  if (m.noise == NoiseModel::learned) {
    for (Eigen::Index k = 0; k < pred.cols(); ++k) {
      const double sq = (pred.col(k) - y.col(k)).squaredNorm();
      out.log_noise_var[k] = 0.5 * (static_cast<double>(pred.rows()) - sq * inv_var[k]);
    }
  }

  return gaussian_nll(m, pred, y) + klw * kl_to_prior(m);
}

namespace {

std::vector<nn::ParamRef> refs(VariationalMlpModel& m) {
  std::vector<nn::ParamRef> p;
  for (auto& l : m.layers) {
    p.push_back({l.w_mu.data(), l.w_mu.size()});
    p.push_back({l.w_rho.data(), l.w_rho.size()});
    p.push_back({l.b_mu.data(), l.b_mu.size()});
    p.push_back({l.b_rho.data(), l.b_rho.size()});
  }
  if (m.noise == NoiseModel::learned) p.push_back({m.log_noise_var.data(), m.log_noise_var.size()});
  return p;
}

std::vector<nn::ParamRef> refs(VariationalGradients& g, bool learned_noise) {
  std::vector<nn::ParamRef> p;
  for (std::size_t l = 0; l < g.w_mu.size(); ++l) {
    p.push_back({g.w_mu[l].data(), g.w_mu[l].size()});
    p.push_back({g.w_rho[l].data(), g.w_rho[l].size()});
    p.push_back({g.b_mu[l].data(), g.b_mu[l].size()});
    p.push_back({g.b_rho[l].data(), g.b_rho[l].size()});
  }
  if (learned_noise) p.push_back({g.log_noise_var.data(), g.log_noise_var.size()});
  return p;
}

double mean_val_nll(const VariationalMlpModel& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  return gaussian_nll(m, nn::forward(mean_network(m), x), y) / static_cast<double>(x.rows());
}

}  // namespace

BnnHistory train_bnn_arrays(VariationalMlpModel& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                            const Eigen::MatrixXd& x_val, const Eigen::MatrixXd& y_val, const BnnTrainConfig& cfg) {
  const auto& base = cfg.base;
  if (base.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (x.rows() == 0 || x.rows() != y.rows()) throw ConfigError("training inputs and targets must be non-empty and aligned");
  m.noise = cfg.noise;
  if (m.log_noise_var.size() != y.cols()) m.log_noise_var = Eigen::VectorXd::Zero(y.cols());

  const Eigen::Index n = x.rows();
  const auto n_total = static_cast<std::size_t>(n);
  std::vector<Eigen::Index> order(n);
  nn::Nadam opt(base.optimizer);
  BnnHistory history;
  VariationalGradients grads;
  if (x_val.rows() > 0) history.initial_val_nll = mean_val_nll(m, x_val, y_val);

  for (int epoch = 0; epoch < base.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Engine shuffle_rng = derive_engine(base.seed, {stream::shuffle, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    std::uint64_t batch = 0;
    for (Eigen::Index begin = 0; begin < n; begin += base.batch_size, ++batch) {
      const Eigen::Index count = std::min<Eigen::Index>(base.batch_size, n - begin);
      const std::vector<Eigen::Index> idx(order.begin() + begin, order.begin() + begin + count);
      const Eigen::MatrixXd xb = x(idx, Eigen::all);
      const Eigen::MatrixXd yb = y(idx, Eigen::all);
      Engine wrng = derive_engine(base.seed, {stream::weights, static_cast<std::uint64_t>(epoch), batch});
      const Realization r = sample_weights(m, wrng);
      const double value = elbo_gradients(m, r, xb, yb, n_total, cfg.kl_scale, grads);
      if (!std::isfinite(value)) {
        throw TrainingError("non-finite ELBO at epoch " + std::to_string(epoch + 1), epoch + 1);
      }
      const auto p = refs(m);
      const auto g = refs(grads, m.noise == NoiseModel::learned);
      opt.step(p, g);
      epoch_loss += value;
    }
    history.train_loss.push_back(epoch_loss / static_cast<double>(n));
    if (x_val.rows() > 0) history.val_nll.push_back(mean_val_nll(m, x_val, y_val));
  }
  return history;
}

BnnTrainResult fit_bnn(const Dataset& train, const Dataset& val, const BnnTrainConfig& cfg) {
  Engine init = derive_engine(cfg.base.seed, {stream::init});
  VariationalMlpModel m = make_variational_model(init, static_cast<int>(2 + train.n_detectors()), cfg.sigma0);
  m.normalizer = fit_normalizer(train);
  const Eigen::MatrixXd x = m.normalizer.features.apply(train.features());
  const Eigen::MatrixXd y = m.normalizer.targets.apply(train.targets());
  Eigen::MatrixXd xv, yv;
  if (val.size() > 0) {
    xv = m.normalizer.features.apply(val.features());
    yv = m.normalizer.targets.apply(val.targets());
  }
  BnnHistory h = train_bnn_arrays(m, x, y, xv, yv, cfg);
  return {std::move(m), std::move(h)};
}

Eigen::Vector3d predict_stochastic(const VariationalMlpModel& m, std::span<const double> raw_features, Engine& rng) {
  Eigen::MatrixXd row(1, static_cast<Eigen::Index>(raw_features.size()));
  for (std::size_t i = 0; i < raw_features.size(); ++i) row(0, static_cast<Eigen::Index>(i)) = raw_features[i];
  const Realization r = sample_weights(m, rng);
  const Eigen::MatrixXd z = nn::forward(r.network, m.normalizer.features.apply(row));
  return m.normalizer.targets.invert(z).row(0).transpose();
}

Eigen::MatrixXd predict_mean(const VariationalMlpModel& m, const Eigen::MatrixXd& raw_features) {
  return m.normalizer.targets.invert(nn::forward(mean_network(m), m.normalizer.features.apply(raw_features)));
}

Eigen::MatrixXd sample_predictions(const VariationalMlpModel& m, const Eigen::MatrixXd& raw_features, std::uint64_t seed) {
  constexpr Eigen::Index kChunk = 512;
  const Eigen::MatrixXd x = m.normalizer.features.apply(raw_features);
  Eigen::MatrixXd out(x.rows(), m.output_width());

  // Per-layer sigma^2 are shared by every row.
  std::vector<Eigen::MatrixXd> w_var;
  std::vector<Eigen::RowVectorXd> b_var;
  for (const auto& l : m.layers) {
    w_var.push_back(softplus(l.w_rho.array()).square().matrix());
    b_var.push_back(softplus(Eigen::ArrayXXd(l.b_rho.array())).col(0).square().matrix().transpose());
  }

  // One distribution per row: normal_distribution caches its second draw.
  std::vector<Engine> engines;
  std::vector<std::normal_distribution<double>> n01;
  for (Eigen::Index begin = 0; begin < x.rows(); begin += kChunk) {
    const Eigen::Index count = std::min(kChunk, x.rows() - begin);
    engines.clear();
    n01.assign(static_cast<std::size_t>(count), std::normal_distribution<double>());
    for (Eigen::Index j = 0; j < count; ++j) {
      engines.push_back(derive_engine(seed, {stream::weights, static_cast<std::uint64_t>(begin + j)}));
    }
    Eigen::MatrixXd h = x.middleRows(begin, count);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      const auto& layer = m.layers[l];
      Eigen::MatrixXd mean = h * layer.w_mu;
      mean.rowwise() += layer.b_mu.transpose();
      Eigen::MatrixXd var = h.array().square().matrix() * w_var[l];
      var.rowwise() += b_var[l];
      Eigen::MatrixXd sd = var.array().sqrt().matrix();
      for (Eigen::Index j = 0; j < count; ++j) {
        for (Eigen::Index k = 0; k < mean.cols(); ++k) mean(j, k) += sd(j, k) * n01[j](engines[j]);
      }
      if (layer.activation == nn::Activation::swish) {
        mean = (mean.array() / (1.0 + (-mean.array()).exp())).matrix();
      } else if (layer.activation == nn::Activation::softmax) {
        throw ConfigError("variational softmax layers are not supported");
      }
      h = std::move(mean);
    }
    out.middleRows(begin, count) = h;
  }
  return m.normalizer.targets.invert(out);
}

nn::Metrics evaluate_stochastic(const VariationalMlpModel& m, const Dataset& test, std::uint64_t seed) {
  return nn::score(sample_predictions(m, test.features(), seed), test.targets());
}

PosteriorSampleSet epistemic_density(const VariationalMlpModel& m, std::span<const double> raw_features, std::size_t samples,
                                     std::uint64_t seed) {
  if (samples == 0) throw ConfigError("sample count must be >= 1");
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(raw_features.size()));
  for (std::size_t i = 0; i < raw_features.size(); ++i) row[static_cast<Eigen::Index>(i)] = raw_features[i];
  const Eigen::MatrixXd x = row.replicate(static_cast<Eigen::Index>(samples), 1);
  return {sample_predictions(m, x, seed), "epistemic", seed};
}

PosteriorSampleSet combined_density(const VariationalMlpModel& m, std::span<const double> mean_counts, double u, double v,
                                    double t_obs, std::size_t samples, std::uint64_t seed, CombinedOptions opts) {
  if (samples == 0) throw ConfigError("sample count must be >= 1");
  const auto width = static_cast<Eigen::Index>(2 + mean_counts.size());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(samples), width);
  for (std::size_t j = 0; j < samples; ++j) {
    const std::uint64_t draw = opts.reuse_measurement ? 0 : j;
    const std::uint64_t mseed = derive_engine(seed, {stream::measurement, draw})();
    const auto f = make_features(sample_measurement(mean_counts, mseed, t_obs), u, v);
    for (Eigen::Index c = 0; c < width; ++c) x(static_cast<Eigen::Index>(j), c) = f[static_cast<std::size_t>(c)];
  }
  return {sample_predictions(m, x, seed), opts.reuse_measurement ? "epistemic" : "epistemic+aleatoric", seed};
}

PosteriorSampleSet combined_density(const VariationalMlpModel& m, const Scenario& s,
                                    std::span<const DetectorSpec> detectors, const PhysicsConstants& pc,
                                    const GridConfig& grid, std::size_t samples, std::uint64_t seed,
                                    CombinedOptions opts) {
  const auto means = expected_array(s, detectors, pc, grid);
  return combined_density(m, means, s.u, s.v, s.t_obs, samples, seed, opts);
}

}  // namespace ste::bnn
