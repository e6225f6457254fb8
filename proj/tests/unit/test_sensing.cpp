#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "ste/error.hpp"
#include "ste/scenario.hpp"
#include "ste/sensing.hpp"

namespace {

using ste::ConcentrationField;
using ste::DetectorSpec;
using ste::PhysicsConstants;

ConcentrationField single_cell(double density, double width) {
  const auto g = ste::build_grid({0, 0}, width, 3);
  return {g, {density}, {0.0}, {0.0}};
}

ste::Scenario reference() {
  ste::Scenario s;
  s.x_c = -389.0;
  s.y_c = 185.37;
  s.mass = 1.83;
  s.u = 2.44;
  s.v = 0.74;
  return s;
}

TEST(ExpectedCounts, ZeroFieldGivesBackground) {
  DetectorSpec d;
  d.position = {10.0, 3.0};
  EXPECT_DOUBLE_EQ(ste::expected_counts(single_cell(0.0, 10.0), d, {}), 30.0);
}

TEST(ExpectedCounts, SingleCellHandEvaluation) {
  // One cell of area 100 m^2 holding 1 g, detector 1000 m away.
  DetectorSpec d;
  d.position = {1000.0, 0.0};
  const double got = ste::expected_counts(single_cell(0.01, 10.0), d, {});
  const double r = 1000.0;
  const double signal =
      3.214e12 * 0.1 * 0.62 * 0.0058 / (4 * std::numbers::pi * r * r) * std::exp(-9.95e-3 * r);
  EXPECT_NEAR(got - 30.0, signal, 1e-15);
  EXPECT_NEAR(got - 30.0, 4.39e-3, 5e-6);
}

TEST(ExpectedCounts, LinearInConcentration) {
  const ste::Scenario s = reference();
  const auto g = ste::build_grid(ste::plume_center(s, 500), 1500, 51);
  auto field = ste::cell_concentrations(s, g, 500);
  DetectorSpec d;
  d.position = {1000.0 + 1.0, 250.0 + 1.0};
  const double one = ste::expected_counts(field, d, {}) - 30.0;
  for (double& c : field.density) c *= 2.0;
  EXPECT_NEAR(ste::expected_counts(field, d, {}) - 30.0, 2.0 * one, 1e-12 * one);
}

TEST(ExpectedCounts, DetectorOnCellCenterIsAnError) {
  DetectorSpec d;
  d.position = {0.0, 0.0};
  EXPECT_THROW(ste::expected_counts(single_cell(1.0, 10.0), d, {}), ste::SimulationError);
}

TEST(ExpectedArray, ZeroMassIsBackgroundOnly) {
  ste::Scenario s = reference();
  s.mass = 0.0;
  const auto dets = ste::make_detectors(ste::default_layout());
  for (double m : ste::expected_array(s, dets, {}, {1500, 51})) EXPECT_DOUBLE_EQ(m, 30.0);
}

TEST(ExpectedArray, NearestDetectorsSeeTheMostCounts) {
  const ste::Scenario s = reference();
  const auto dets = ste::make_detectors(ste::default_layout());
  const auto means = ste::expected_array(s, dets, {}, {});
  const auto c = ste::plume_center(s, s.t_obs);
  std::vector<std::size_t> by_distance(dets.size());
  std::iota(by_distance.begin(), by_distance.end(), 0);
  auto dist = [&](std::size_t k) { return std::hypot(dets[k].position.x - c.x, dets[k].position.y - c.y); };
  std::sort(by_distance.begin(), by_distance.end(), [&](auto a, auto b) { return dist(a) < dist(b); });
  const auto top = std::max_element(means.begin(), means.end()) - means.begin();
  EXPECT_EQ(static_cast<std::size_t>(top), by_distance.front());
  // Beyond a few puff widths the kernel is monotone in distance.
  for (std::size_t i = 1; i < by_distance.size(); ++i) {
    if (dist(by_distance[i - 1]) > 300.0) EXPECT_GE(means[by_distance[i - 1]], means[by_distance[i]]);
  }
}

TEST(Poisson, ZeroMean) {
  ste::Engine rng(1);
  EXPECT_EQ(ste::sample_counts(0.0, rng), 0);
  EXPECT_THROW(ste::sample_counts(-1.0, rng), ste::DomainError);
}

TEST(Poisson, MomentsAtBackgroundRate) {
  ste::Engine rng = ste::derive_engine(2024, {7});
  const int n = 1'000'000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double k = static_cast<double>(ste::sample_counts(30.0, rng));
    sum += k;
    sum2 += k * k;
  }
  const double mean = sum / n;
  const double var = (sum2 - n * mean * mean) / (n - 1);
  EXPECT_NEAR(mean, 30.0, 3.0 * std::sqrt(30.0 / n));
  EXPECT_NEAR(var / 30.0, 1.0, 0.02);
}

TEST(Measurement, SameSeedSameCounts) {
  const auto dets = ste::make_detectors(ste::default_layout());
  const auto a = ste::observe_array(reference(), dets, {}, {1500, 101}, 99);
  const auto b = ste::observe_array(reference(), dets, {}, {1500, 101}, 99);
  EXPECT_EQ(a.counts, b.counts);
  EXPECT_EQ(a.detector_ids.front(), 1);
  EXPECT_EQ(a.detector_ids.back(), 18);
  const auto c = ste::observe_array(reference(), dets, {}, {1500, 101}, 100);
  EXPECT_NE(a.counts, c.counts);
}

TEST(Measurement, DetectorStreamsAreIndependentOfArraySize) {
  // Detector k's draw depends only on (seed, k).
  const std::vector<double> means{30, 40, 50, 60};
  const auto all = ste::sample_measurement(means, 5, 500);
  const auto first_two = ste::sample_measurement(std::span(means).first(2), 5, 500);
  EXPECT_EQ(all.counts[0], first_two.counts[0]);
  EXPECT_EQ(all.counts[1], first_two.counts[1]);
}

TEST(Validate, DetectorAndPhysics) {
  DetectorSpec d;
  d.efficiency = 1.5;
  EXPECT_THROW(ste::validate(d), ste::ConfigError);
  PhysicsConstants pc;
  pc.specific_activity = 0;
  EXPECT_THROW(ste::validate(pc), ste::ConfigError);
}

}  // namespace
