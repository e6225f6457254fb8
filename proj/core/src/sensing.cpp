#include "ste/sensing.hpp"

#include <Eigen/Core>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "ste/error.hpp"

namespace ste {

void validate(const DetectorSpec& d) {
  if (!(d.face_area > 0.0)) throw ConfigError("detector face area must be positive");
  if (!(d.efficiency > 0.0 && d.efficiency <= 1.0)) throw ConfigError("detector efficiency must be in (0, 1]");
  if (!(d.dwell_time > 0.0)) throw ConfigError("detector dwell time must be positive");
  if (!(d.background_rate >= 0.0)) throw ConfigError("background rate must be non-negative");
  if (!std::isfinite(d.position.x) || !std::isfinite(d.position.y)) throw ConfigError("detector position must be finite");
}

void validate(const PhysicsConstants& pc) {
  if (!(pc.specific_activity > 0.0)) throw ConfigError("specific activity must be positive");
  if (!(pc.attenuation >= 0.0)) throw ConfigError("attenuation coefficient must be non-negative");
}

double expected_counts(const ConcentrationField& field, const DetectorSpec& d, const PhysicsConstants& pc) {
  const auto n = static_cast<Eigen::Index>(field.center_x.size());
  if (n == 0 || field.density.empty()) throw SimulationError("empty concentration field");
  if (!std::isfinite(d.position.x) || !std::isfinite(d.position.y)) throw SimulationError("detector position must be finite");

  Eigen::ArrayXd dx2(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dx = field.center_x[i] - d.position.x;
    dx2[i] = dx * dx;
  }

  double signal = 0.0;
  Eigen::ArrayXd r2(n), r(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double dy = field.center_y[j] - d.position.y;
    r2 = dx2 + dy * dy;
    if ((r2 == 0.0).any()) throw SimulationError("detector located exactly at a cell center");
    r = r2.sqrt();
    Eigen::Map<const Eigen::ArrayXd> c(field.density.data() + j * n, n);
    signal += (c * (-pc.attenuation * r).exp() / r2).sum();
  }

  const double per_gram = pc.specific_activity * d.dwell_time * d.efficiency * d.face_area / (4.0 * std::numbers::pi);
  return signal * per_gram * field.cell_area() + d.background_rate * d.dwell_time;
}

std::vector<double> expected_array(const Scenario& s, std::span<const DetectorSpec> detectors,
                                   const PhysicsConstants& pc, const GridConfig& grid) {
  const Grid g = build_grid(plume_center(s, s.t_obs), grid.extent, grid.n_points);
  const ConcentrationField field = cell_concentrations(s, g, s.t_obs);
  std::vector<double> means(detectors.size());
  for (std::size_t k = 0; k < detectors.size(); ++k) means[k] = expected_counts(field, detectors[k], pc);
  return means;
}

std::int64_t sample_counts(double mean, Engine& rng) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) throw DomainError("Poisson mean must be finite and non-negative");
  if (mean == 0.0) return 0;
  std::poisson_distribution<std::int64_t> dist(mean);
  return dist(rng);
}

MeasurementVector sample_measurement(std::span<const double> means, std::uint64_t seed, double t_obs) {
  MeasurementVector m;
  m.t_obs = t_obs;
  m.counts.resize(means.size());
  m.detector_ids.resize(means.size());
  for (std::size_t k = 0; k < means.size(); ++k) {
    Engine rng = derive_engine(seed, {stream::measurement, k});
    m.counts[k] = sample_counts(means[k], rng);
    m.detector_ids[k] = static_cast<int>(k) + 1;
  }
  return m;
}

MeasurementVector observe_array(const Scenario& s, std::span<const DetectorSpec> detectors,
                                const PhysicsConstants& pc, const GridConfig& grid, std::uint64_t seed) {
  const auto means = expected_array(s, detectors, pc, grid);
  return sample_measurement(means, seed, s.t_obs);
}

}  // namespace ste
