#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ste/plume.hpp"
#include "ste/rng.hpp"

namespace ste {

/// 3x3 inch NaI scintillator looking at 662 keV gammas.
struct DetectorSpec {
  Point position;
  double face_area = 0.0058;      // m^2
  double efficiency = 0.62;       // intrinsic, dimensionless
  double dwell_time = 0.1;        // s
  double background_rate = 300.0; // counts/s
};

struct PhysicsConstants {
  double specific_activity = 3.214e12;  // Bq/g, Cs-137
  double attenuation = 9.95e-3;         // 1/m, 662 keV in sea-level air
};

/// Plume-centered integration grid used whenever a scenario is simulated.
struct GridConfig {
  double extent = 1500.0;
  int n_points = 201;
};

/// One snapshot of integer counts, one entry per detector.
struct MeasurementVector {
  std::vector<std::int64_t> counts;
  std::vector<int> detector_ids;
  double t_obs = 500.0;
};

void validate(const DetectorSpec& d);
void validate(const PhysicsConstants& pc);

/// Poisson mean of the detector: attenuated inverse-square sum over cells plus
/// background B * dt. Throws SimulationError if the detector sits on a cell center.
double expected_counts(const ConcentrationField& field, const DetectorSpec& d, const PhysicsConstants& pc);

/// Mean counts of every detector for one scenario, on a grid centered at the
/// plume position at s.t_obs. A zero mass gives pure background.
std::vector<double> expected_array(const Scenario& s, std::span<const DetectorSpec> detectors,
                                   const PhysicsConstants& pc, const GridConfig& grid);

/// One Poisson draw. Throws DomainError for a negative or non-finite mean.
std::int64_t sample_counts(double mean, Engine& rng);

/// Independent Poisson draws for each detector; detector d uses the engine
/// derived from (seed, measurement, d).
MeasurementVector sample_measurement(std::span<const double> means, std::uint64_t seed, double t_obs);

MeasurementVector observe_array(const Scenario& s, std::span<const DetectorSpec> detectors,
                                const PhysicsConstants& pc, const GridConfig& grid, std::uint64_t seed);

}  // namespace ste
