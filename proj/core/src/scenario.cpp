#include "ste/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "ste/error.hpp"
#include "ste/parallel.hpp"

namespace ste {

DetectorLayout default_layout() {
  DetectorLayout layout;
  layout.reserve(18);
  for (int ix = 0; ix < 6; ++ix) {
    for (int iy = 0; iy < 3; ++iy) {
      layout.push_back({2000.0 / 6.0 * (ix + 0.5), -750.0 + 500.0 * (iy + 0.5)});
    }
  }
  return layout;
}

std::vector<DetectorSpec> make_detectors(const DetectorLayout& layout, const DetectorSpec& prototype) {
  std::vector<DetectorSpec> out(layout.size(), prototype);
  for (std::size_t k = 0; k < layout.size(); ++k) out[k].position = layout[k];
  return out;
}

Scenario sample_scenario(Engine& rng, const ScenarioBounds& b) {
  auto draw = [&rng](const Interval& i) { return std::uniform_real_distribution<double>(i.lo, i.hi)(rng); };
  Scenario s;
  s.x_c = draw(b.x_c);
  s.y_c = draw(b.y_c);
  s.mass = draw(b.mass);
  s.u = draw(b.u);
  s.v = draw(b.v);
  s.k_x = b.k_x;
  s.k_y = b.k_y;
  s.t_obs = b.t_obs;
  return s;
}

std::vector<double> make_features(const MeasurementVector& m, double u, double v) {
  std::vector<double> f;
  f.reserve(m.counts.size() + 2);
  f.push_back(u);
  f.push_back(v);
  for (auto c : m.counts) {
    if (c < 0) throw DomainError("negative detector count");
    f.push_back(std::log(static_cast<double>(std::max<std::int64_t>(c, 1))));
  }
  return f;
}

Eigen::MatrixXd Dataset::features() const {
  const auto cols = static_cast<Eigen::Index>(2 + n_detectors());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Record& rec = rows[r];
    if (rec.counts.size() != n_detectors()) throw ConfigError("row " + std::to_string(r) + " has the wrong detector count");
    x(r, 0) = rec.u;
    x(r, 1) = rec.v;
    for (std::size_t k = 0; k < rec.counts.size(); ++k) {
      x(r, 2 + k) = std::log(static_cast<double>(std::max<std::int64_t>(rec.counts[k], 1)));
    }
  }
  return x;
}

Eigen::MatrixXd Dataset::targets() const {
  Eigen::MatrixXd y(static_cast<Eigen::Index>(rows.size()), 3);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    y(r, 0) = rows[r].x_c;
    y(r, 1) = rows[r].y_c;
    y(r, 2) = rows[r].mass;
  }
  return y;
}

Record generate_row(std::uint64_t seed, std::size_t index, const DatagenConfig& cfg) {
  Engine scenario_rng = derive_engine(seed, {index, stream::scenario});
  const Scenario s = sample_scenario(scenario_rng, cfg.bounds);
  const std::uint64_t measurement_seed = derive_engine(seed, {index, stream::measurement})();
  const auto detectors = make_detectors(cfg.layout, cfg.detector);
  const MeasurementVector m = observe_array(s, detectors, cfg.physics, cfg.grid, measurement_seed);
  return Record{s.u, s.v, m.counts, s.x_c, s.y_c, s.mass};
}

Dataset generate_dataset(std::size_t n, std::uint64_t seed, const DatagenConfig& cfg) {
  if (n == 0) throw ConfigError("dataset size must be at least 1");
  if (cfg.layout.empty()) throw ConfigError("detector layout is empty");
  validate(cfg.physics);
  validate(cfg.detector);

  Dataset d;
  d.seed = seed;
  d.layout = cfg.layout;
  d.rows.resize(n);
  parallel_for(n, [&](std::size_t i) {
    try {
      d.rows[i] = generate_row(seed, i, cfg);
    } catch (const Error& e) {
      throw SimulationError("dataset row " + std::to_string(i) + ": " + e.what());
    }
  });
  return d;
}

Splits split_dataset(const Dataset& d, const SplitRatios& r) {
  if (r.train < 0 || r.val < 0 || r.test < 0 || std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  const std::size_t n = d.size();
  const auto n_val = static_cast<std::size_t>(std::floor(n * r.val));
  const auto n_test = static_cast<std::size_t>(std::floor(n * r.test));
  const std::size_t n_train = n - n_val - n_test;
  if (n_train == 0 || n_val == 0 || n_test == 0) {
    throw ConfigError("split of " + std::to_string(n) + " rows leaves an empty partition");
  }

  auto slice = [&](std::size_t begin, std::size_t count, const char* tag) {
    Dataset part;
    part.seed = d.seed;
    part.layout = d.layout;
    part.split = tag;
    part.rows.assign(d.rows.begin() + static_cast<std::ptrdiff_t>(begin),
                     d.rows.begin() + static_cast<std::ptrdiff_t>(begin + count));
    return part;
  };
  return {slice(0, n_train, "train"), slice(n_train, n_val, "val"), slice(n_train + n_val, n_test, "test")};
}

ColumnScaler::ColumnScaler(Eigen::VectorXd mean, Eigen::VectorXd scale) : mean_(std::move(mean)), scale_(std::move(scale)) {
  if (mean_.size() != scale_.size()) throw ConfigError("scaler mean/scale size mismatch");
  if ((scale_.array() <= 0.0).any()) throw ConfigError("scaler standard deviations must be positive");
}

ColumnScaler ColumnScaler::fit(const Eigen::MatrixXd& x) {
  if (x.rows() == 0) throw ConfigError("cannot fit a normalizer on an empty set");
  Eigen::VectorXd mean = x.colwise().mean().transpose();
  Eigen::VectorXd sd(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double var = (x.col(c).array() - mean[c]).square().mean();
    if (!(var > 0.0)) throw ConfigError("column " + std::to_string(c) + " has zero variance");
    sd[c] = std::sqrt(var);
  }
  return ColumnScaler(std::move(mean), std::move(sd));
}

Eigen::MatrixXd ColumnScaler::apply(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean_.size()) throw ConfigError("normalizer width does not match data");
  return (x.rowwise() - mean_.transpose()).array().rowwise() / scale_.transpose().array();
}

Eigen::MatrixXd ColumnScaler::invert(const Eigen::MatrixXd& z) const {
  if (z.cols() != mean_.size()) throw ConfigError("normalizer width does not match data");
  return (z.array().rowwise() * scale_.transpose().array()).matrix().rowwise() + mean_.transpose();
}

Normalizer fit_normalizer(const Dataset& train) {
  return {ColumnScaler::fit(train.features()), ColumnScaler::fit(train.targets())};
}

}  // namespace ste
