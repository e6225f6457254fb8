#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "ste/plume.hpp"
#include "ste/rng.hpp"
#include "ste/sensing.hpp"

namespace ste {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  double width() const { return hi - lo; }
  bool contains(double x) const { return x >= lo && x <= hi; }
};

/// Uniform sampling box for release scenarios. Diffusivities and the
/// observation time are held fixed.
struct ScenarioBounds {
  Interval x_c{-500.0, 0.0};
  Interval y_c{-250.0, 250.0};
  Interval mass{1.0, 5.0};
  Interval u{2.0, 4.0};
  Interval v{-1.0, 1.0};
  double k_x = 5.0;
  double k_y = 5.0;
  double t_obs = 500.0;
};

using DetectorLayout = std::vector<Point>;

/// 6 x 3 cell-centered array over x in [0, 2000], y in [-750, 750].
/// Detector ids run x-major: id = 3 * ix + iy + 1.
DetectorLayout default_layout();

std::vector<DetectorSpec> make_detectors(const DetectorLayout& layout, const DetectorSpec& prototype = {});

Scenario sample_scenario(Engine& rng, const ScenarioBounds& bounds = {});

/// [u, v, ln(max(c_1, 1)), ..., ln(max(c_n, 1))]
std::vector<double> make_features(const MeasurementVector& m, double u, double v);

/// One generated example: the raw counts and the release that produced them.
struct Record {
  double u = 0.0;
  double v = 0.0;
  std::vector<std::int64_t> counts;
  double x_c = 0.0;
  double y_c = 0.0;
  double mass = 0.0;
};

struct DatagenConfig {
  ScenarioBounds bounds;
  PhysicsConstants physics;
  GridConfig grid;
  DetectorSpec detector;
  DetectorLayout layout = default_layout();
};

struct Dataset {
  std::vector<Record> rows;
  std::uint64_t seed = 0;
  std::string split = "all";
  DetectorLayout layout = default_layout();

  std::size_t size() const { return rows.size(); }
  std::size_t n_detectors() const { return layout.size(); }
  /// N x (2 + detectors) model inputs, counts log-transformed.
  Eigen::MatrixXd features() const;
  /// N x 3 of (x_c, y_c, mass).
  Eigen::MatrixXd targets() const;
};

/// Row i depends only on (seed, i): its scenario comes from the engine
/// (seed, i, scenario) and its counts from a measurement seed drawn from
/// (seed, i, measurement).
Record generate_row(std::uint64_t seed, std::size_t index, const DatagenConfig& cfg);
Dataset generate_dataset(std::size_t n, std::uint64_t seed, const DatagenConfig& cfg);

struct SplitRatios {
  double train = 0.5;
  double val = 0.25;
  double test = 0.25;
};

struct Splits {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Contiguous, order-preserving partition: val and test get floor(N * r)
/// rows, train takes the rest, in the order train | val | test.
Splits split_dataset(const Dataset& d, const SplitRatios& ratios = {});

/// Per-column z-scoring.
class ColumnScaler {
 public:
  ColumnScaler() = default;
  ColumnScaler(Eigen::VectorXd mean, Eigen::VectorXd scale);

  /// Throws ConfigError on an empty matrix or a zero-variance column.
  static ColumnScaler fit(const Eigen::MatrixXd& x);

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& z) const;

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& scale() const { return scale_; }
  Eigen::Index size() const { return mean_.size(); }

 private:
  Eigen::VectorXd mean_;
  Eigen::VectorXd scale_;
};

struct Normalizer {
  ColumnScaler features;
  ColumnScaler targets;
};

/// Fitted on the training split only.
Normalizer fit_normalizer(const Dataset& train);

}  // namespace ste
