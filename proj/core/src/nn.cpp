#include "ste/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "ste/error.hpp"

namespace ste::nn {

double swish(double x) { return x / (1.0 + std::exp(-x)); }

double swish_derivative(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s + x * s * (1.0 - s);
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double shift = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - shift).exp().matrix();
  return e / e.sum();
}

int BinGrid::index(double x) const {
  const int j = static_cast<int>(std::floor((x - lo) / width()));
  return std::clamp(j, 0, bins - 1);
}

double binned_expectation(std::span<const double> probs, const BinGrid& bins) {
  if (static_cast<int>(probs.size()) != bins.bins) throw ConfigError("probability vector does not match bin count");
  double acc = 0.0;
  for (int j = 0; j < bins.bins; ++j) acc += probs[j] * bins.midpoint(j);
  return acc;
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.biases.size());
  return n;
}

MlpModel make_mlp(const std::vector<int>& widths, const std::vector<Activation>& activations, Engine& rng) {
  if (widths.size() < 2 || activations.size() != widths.size() - 1) {
    throw ConfigError("need one activation per layer and at least two widths");
  }
  MlpModel m;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int in = widths[l];
    const int out = widths[l + 1];
    const double limit = std::sqrt(6.0 / in);
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer;
    layer.weights.resize(in, out);
    for (Eigen::Index c = 0; c < out; ++c)
      for (Eigen::Index r = 0; r < in; ++r) layer.weights(r, c) = dist(rng);
    layer.biases = Eigen::VectorXd::Zero(out);
    layer.activation = activations[l];
    m.layers.push_back(std::move(layer));
  }
  return m;
}

MlpModel make_regression_model(Engine& rng, int inputs) {
  MlpModel m = make_mlp({inputs, 150, 200, 3}, {Activation::swish, Activation::swish, Activation::linear}, rng);
  m.kind = OutputKind::regression;
  return m;
}

MlpModel make_classification_model(Engine& rng, int inputs, int bins) {
  MlpModel m =
      make_mlp({inputs, 150, 200, 2 * bins}, {Activation::swish, Activation::swish, Activation::softmax}, rng);
  m.kind = OutputKind::classification;
  m.softmax_blocks = 2;
  m.x_bins.bins = bins;
  m.y_bins.bins = bins;
  return m;
}

namespace {

void activate(Activation a, int blocks, Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::linear:
      return;
    case Activation::swish:
      z = (z.array() / (1.0 + (-z.array()).exp())).matrix();
      return;
    case Activation::softmax: {
      const Eigen::Index width = z.cols() / blocks;
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        for (int b = 0; b < blocks; ++b) {
          auto block = z.row(r).segment(b * width, width);
          const double shift = block.maxCoeff();
          block = (block.array() - shift).exp().matrix();
          block /= block.sum();
        }
      }
      return;
    }
  }
}

void check_input(const MlpModel& m, const Eigen::MatrixXd& x) {
  if (m.layers.empty()) throw ConfigError("model has no layers");
  if (x.cols() != m.input_width()) {
    throw ConfigError("input width " + std::to_string(x.cols()) + " does not match model width " +
                      std::to_string(m.input_width()));
  }
}

}  // namespace

Eigen::MatrixXd forward(const MlpModel& m, const Eigen::MatrixXd& x) {
  check_input(m, x);
  Eigen::MatrixXd h = x;
  for (const auto& layer : m.layers) {
    Eigen::MatrixXd z = h * layer.weights;
    z.rowwise() += layer.biases.transpose();
    activate(layer.activation, m.softmax_blocks, z);
    h = std::move(z);
  }
  return h;
}

Eigen::MatrixXd forward(const MlpModel& m, const Eigen::MatrixXd& x, ForwardCache& cache) {
  check_input(m, x);
  cache.inputs.resize(m.layers.size());
  cache.pre.resize(m.layers.size());
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& layer = m.layers[l];
    cache.inputs[l] = h;
    Eigen::MatrixXd z = h * layer.weights;
    z.rowwise() += layer.biases.transpose();
    cache.pre[l] = z;
    activate(layer.activation, m.softmax_blocks, z);
    h = std::move(z);
  }
  return h;
}

double mae_loss(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred) {
  if (truth.rows() != pred.rows() || truth.cols() != pred.cols()) throw ConfigError("MAE shape mismatch");
  if (truth.size() == 0) return 0.0;
  return (truth - pred).array().abs().mean();
}

double cce_loss(const Eigen::MatrixXd& onehots, const Eigen::MatrixXd& probs) {
  if (onehots.rows() != probs.rows() || onehots.cols() != probs.cols()) throw ConfigError("CCE shape mismatch");
  if (onehots.rows() == 0) return 0.0;
  const double total = (onehots.array() * probs.array().max(1e-12).log()).sum();
  return -total / static_cast<double>(onehots.rows());
}

double loss_and_gradient(LossKind loss, const Eigen::MatrixXd& output, const Eigen::MatrixXd& target,
                         Eigen::MatrixXd& grad_pre) {
  switch (loss) {
    case LossKind::mae: {
      const double value = mae_loss(target, output);
      // subgradient sign(0) = 0
      grad_pre = (output - target).array().sign().matrix() / static_cast<double>(output.size());
      return value;
    }
    case LossKind::cce: {
      const double value = cce_loss(target, output);
      grad_pre = (output - target) / static_cast<double>(output.rows());
      return value;
    }
  }
  throw ConfigError("unknown loss");
}

Gradients backward(const MlpModel& m, const ForwardCache& cache, const Eigen::MatrixXd& grad_final_pre) {
  const std::size_t n = m.layers.size();
  Gradients g;
  g.weights.resize(n);
  g.biases.resize(n);
  Eigen::MatrixXd dz = grad_final_pre;
  for (std::size_t l = n; l-- > 0;) {
    g.weights[l].noalias() = cache.inputs[l].transpose() * dz;
    g.biases[l] = dz.colwise().sum().transpose();
    if (l == 0) break;
    Eigen::MatrixXd da = dz * m.layers[l].weights.transpose();
    const auto& prev = m.layers[l - 1];
    const Eigen::ArrayXXd& z = cache.pre[l - 1].array();
    switch (prev.activation) {
      case Activation::linear:
        dz = std::move(da);
        break;
      case Activation::swish: {
        const Eigen::ArrayXXd s = 1.0 / (1.0 + (-z).exp());
        dz = (da.array() * (s + z * s * (1.0 - s))).matrix();
        break;
      }
      case Activation::softmax:
        throw ConfigError("softmax is only supported on the output layer");
    }
  }
  return g;
}

double loss_gradients(const MlpModel& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, LossKind loss,
                      Gradients& grads) {
  ForwardCache cache;
  const Eigen::MatrixXd out = forward(m, x, cache);
  Eigen::MatrixXd grad_pre;
  const double value = loss_and_gradient(loss, out, y, grad_pre);
  grads = backward(m, cache, grad_pre);
  return value;
}

std::vector<ParamRef> parameter_refs(MlpModel& m) {
  std::vector<ParamRef> refs;
  for (auto& l : m.layers) {
    refs.push_back({l.weights.data(), l.weights.size()});
    refs.push_back({l.biases.data(), l.biases.size()});
  }
  return refs;
}

std::vector<ParamRef> parameter_refs(Gradients& g) {
  std::vector<ParamRef> refs;
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    refs.push_back({g.weights[l].data(), g.weights[l].size()});
    refs.push_back({g.biases[l].data(), g.biases[l].size()});
  }
  return refs;
}

void Nadam::step(std::span<const ParamRef> params, std::span<const ParamRef> grads) {
  if (params.size() != grads.size()) throw ConfigError("parameter/gradient block count mismatch");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Eigen::ArrayXd::Zero(p.size));
      v_.push_back(Eigen::ArrayXd::Zero(p.size));
    }
  }
  if (m_.size() != params.size()) throw ConfigError("optimizer state does not match parameter layout");

  ++t_;
  const double b1 = cfg_.beta1;
  const double b2 = cfg_.beta2;
  const double c1_next = 1.0 - std::pow(b1, static_cast<double>(t_ + 1));
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));

  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size != grads[i].size) throw ConfigError("parameter/gradient size mismatch");
    Eigen::Map<Eigen::ArrayXd> p(params[i].data, params[i].size);
    Eigen::Map<const Eigen::ArrayXd> g(grads[i].data, grads[i].size);
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g.square();
    const Eigen::ArrayXd m_hat = b1 * m_[i] / c1_next + (1.0 - b1) * g / c1;
    const Eigen::ArrayXd v_hat = v_[i] / c2;
    p -= cfg_.learning_rate * m_hat / (v_hat.sqrt() + cfg_.epsilon);
  }
}

TrainHistory train_arrays(MlpModel& m, LossKind loss, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                          const Eigen::MatrixXd& x_val, const Eigen::MatrixXd& y_val, const TrainConfig& cfg) {
  if (cfg.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(cfg.optimizer.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (x.rows() == 0 || x.rows() != y.rows()) throw ConfigError("training inputs and targets must be non-empty and aligned");

  const Eigen::Index n = x.rows();
  std::vector<Eigen::Index> order(n);
  Nadam opt(cfg.optimizer);
  TrainHistory history;
  Gradients grads;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Engine shuffle_rng = derive_engine(cfg.seed, {stream::shuffle, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    for (Eigen::Index begin = 0; begin < n; begin += cfg.batch_size) {
      const Eigen::Index count = std::min<Eigen::Index>(cfg.batch_size, n - begin);
      const std::vector<Eigen::Index> idx(order.begin() + begin, order.begin() + begin + count);
      const Eigen::MatrixXd xb = x(idx, Eigen::all);
      const Eigen::MatrixXd yb = y(idx, Eigen::all);
      const double value = loss_gradients(m, xb, yb, loss, grads);
      if (!std::isfinite(value)) throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1), epoch + 1);
      const auto p = parameter_refs(m);
      const auto g = parameter_refs(grads);
      opt.step(p, g);
      epoch_loss += value * static_cast<double>(count);
    }
    history.train_loss.push_back(epoch_loss / static_cast<double>(n));

    if (x_val.rows() > 0) {
      const Eigen::MatrixXd out = forward(m, x_val);
      const double v = loss == LossKind::mae ? mae_loss(y_val, out) : cce_loss(y_val, out);
      history.val_loss.push_back(v);
    }
  }
  return history;
}

Eigen::MatrixXd encode_inputs(const MlpModel& m, const Dataset& d) { return m.normalizer.features.apply(d.features()); }

Eigen::MatrixXd encode_targets(const MlpModel& m, const Dataset& d) {
  const Eigen::MatrixXd t = d.targets();
  if (m.kind == OutputKind::regression) return m.normalizer.targets.apply(t);

  const int bx = m.x_bins.bins;
  const int by = m.y_bins.bins;
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(t.rows(), bx + by);
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    onehot(r, m.x_bins.index(t(r, 0))) = 1.0;
    onehot(r, bx + m.y_bins.index(t(r, 1))) = 1.0;
  }
  return onehot;
}

TrainResult fit_model(OutputKind kind, const Dataset& train, const Dataset& val, const TrainConfig& cfg) {
  Engine init = derive_engine(cfg.seed, {stream::init});
  const int inputs = static_cast<int>(2 + train.n_detectors());
  MlpModel m = kind == OutputKind::regression ? make_regression_model(init, inputs)
                                              : make_classification_model(init, inputs);
  m.normalizer = fit_normalizer(train);
  const Eigen::MatrixXd x = encode_inputs(m, train);
  const Eigen::MatrixXd y = encode_targets(m, train);
  Eigen::MatrixXd xv, yv;
  if (val.size() > 0) {
    xv = encode_inputs(m, val);
    yv = encode_targets(m, val);
  }
  const LossKind loss = kind == OutputKind::regression ? LossKind::mae : LossKind::cce;
  TrainHistory h = train_arrays(m, loss, x, y, xv, yv, cfg);
  return {std::move(m), std::move(h)};
}

Eigen::MatrixXd predict_probabilities(const MlpModel& m, const Eigen::MatrixXd& raw_features) {
  if (m.kind != OutputKind::classification) throw ConfigError("probabilities need a classification model");
  return forward(m, m.normalizer.features.apply(raw_features));
}

Eigen::MatrixXd predict(const MlpModel& m, const Eigen::MatrixXd& raw_features) {
  if (m.kind == OutputKind::regression) {
    return m.normalizer.targets.invert(forward(m, m.normalizer.features.apply(raw_features)));
  }
  const Eigen::MatrixXd p = predict_probabilities(m, raw_features);
  const int bx = m.x_bins.bins;
  const int by = m.y_bins.bins;
  Eigen::MatrixXd out(p.rows(), 2);
  std::vector<double> row(p.cols());
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    for (Eigen::Index c = 0; c < p.cols(); ++c) row[c] = p(r, c);
    out(r, 0) = binned_expectation(std::span(row).subspan(0, bx), m.x_bins);
    out(r, 1) = binned_expectation(std::span(row).subspan(bx, by), m.y_bins);
  }
  return out;
}

Metrics score(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth) {
  if (predicted.rows() != truth.rows() || predicted.cols() < 2 || truth.cols() < 3) {
    throw ConfigError("prediction/target shapes are incompatible");
  }
  Metrics out;
  const Eigen::Index n = truth.rows();
  const bool has_mass = predicted.cols() >= 3;
  out.row_location_error.resize(n);
  if (has_mass) out.row_mass_error.resize(n);
  double loc = 0.0, mass = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    const double e = std::hypot(predicted(r, 0) - truth(r, 0), predicted(r, 1) - truth(r, 1));
    out.row_location_error[r] = e;
    loc += e;
    if (has_mass) {
      const double em = std::abs(predicted(r, 2) - truth(r, 2));
      out.row_mass_error[r] = em;
      mass += em;
    }
  }
  out.location_error = n > 0 ? loc / n : 0.0;
  out.mass_mae = has_mass ? (n > 0 ? mass / n : 0.0) : std::numeric_limits<double>::quiet_NaN();
  return out;
}

Metrics evaluate(const MlpModel& m, const Dataset& test) { return score(predict(m, test.features()), test.targets()); }

}  // namespace ste::nn
