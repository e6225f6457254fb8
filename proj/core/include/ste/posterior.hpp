#pragma once

#include <Eigen/Core>
#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ste::posterior {

inline constexpr std::array<const char*, 3> kParameterNames = {"x_c", "y_c", "m_c"};

struct Stats {
  double mean = 0.0;
  double variance = 0.0;  // n - 1 denominator; 0 for a single sample
  double sd = 0.0;
  std::size_t n = 0;
};

Stats describe(std::span<const double> samples);
/// Moments of a discrete distribution (weights need not be normalized).
Stats describe_weighted(std::span<const double> values, std::span<const double> weights);

/// Linear-interpolation quantile, position (n - 1) p over the sorted samples.
double quantile(std::span<const double> sorted, double p);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  bool contains(double x) const { return x >= lo && x <= hi; }
};

/// Central interval between the (1 - level)/2 and (1 + level)/2 quantiles.
Interval credible_interval(std::span<const double> samples, double level);
/// Same for a discrete distribution on increasing support points: the first
/// support points whose CDF reaches each tail probability.
Interval weighted_credible_interval(std::span<const double> values, std::span<const double> weights, double level);

enum class DensityKind { histogram, gaussian_kde, discrete };

struct DensityEstimate {
  DensityKind kind = DensityKind::histogram;
  std::vector<double> grid;     // bin centers or evaluation points
  std::vector<double> density;
  std::vector<double> edges;    // histogram only
  std::string source;
  std::size_t sample_count = 0;
  double bandwidth = 0.0;       // KDE only

  /// sum(height * width) for histograms, trapezoid rule for KDEs, sum of
  /// masses for discrete estimates.
  double integral() const;
};

/// Equal-width bins spanning [min, max] of the samples (unit-wide range
/// centered on the value if every sample is equal).
DensityEstimate histogram(std::span<const double> samples, int bins);
/// Explicit increasing edges; samples outside them are ignored.
DensityEstimate histogram(std::span<const double> samples, std::span<const double> edges);

/// h = 0.9 min(sd, IQR / 1.34) n^(-1/5); falls back to sd when the IQR is zero.
/// Throws DomainError when every sample is equal.
double silverman_bandwidth(std::span<const double> samples);

double kde_pdf(std::span<const double> samples, double bandwidth, double x);

struct KdeOptions {
  double bandwidth = 0.0;   // <= 0 selects Silverman
  int points = 512;         // minimum number of grid points
  double pad = 6.0;         // grid extends pad * h past the sample range
  std::optional<std::pair<double, double>> range;  // overrides the padded range
};

DensityEstimate gaussian_kde(std::span<const double> samples, const KdeOptions& opts = {});

struct EnsembleKde {
  DensityEstimate pooled;
  std::vector<DensityEstimate> members;  // each on the pooled grid
};

/// KDE of all sets pooled together, plus one KDE per set on the same grid.
EnsembleKde ensemble_kde(const std::vector<std::vector<double>>& sets, const KdeOptions& opts = {});

/// One parameter of a source: samples, or support points with weights.
struct Marginal {
  std::vector<double> values;
  std::vector<double> weights;  // empty for equally weighted samples
};

struct Source {
  std::string tag;
  std::array<std::optional<Marginal>, 3> params;
};

Source source_from_samples(const std::string& tag, const Eigen::MatrixXd& samples);
/// Classification output: probabilities over bin midpoints for x and y.
Source source_from_probabilities(const std::string& tag, std::span<const double> x_mid, std::span<const double> x_prob,
                                 std::span<const double> y_mid, std::span<const double> y_prob);

struct ParamStats {
  double mean = 0.0;
  double sd = 0.0;
  double variance = 0.0;
  Interval interval95;
  bool contains_truth = false;
};

struct SourceReport {
  std::string tag;
  std::size_t samples = 0;
  std::array<std::optional<ParamStats>, 3> params;
};

struct VarianceRatio {
  std::string numerator;
  std::string denominator;
  std::string parameter;
  double ratio = 0.0;
};

struct TimingRatio {
  std::string numerator;
  std::string denominator;
  double ratio = 0.0;
};

struct ComparisonReport {
  std::array<double, 3> truth{};
  std::vector<SourceReport> sources;
  std::vector<VarianceRatio> variance_ratios;
  std::map<std::string, double> timings;  // seconds per source tag
  std::vector<TimingRatio> timing_ratios;

  const SourceReport* find(const std::string& tag) const;
};

/// Per-parameter statistics for every source, truth containment in the
/// central 95% interval, and pairwise variance and timing ratios.
ComparisonReport compare(const std::vector<Source>& sources, const std::array<double, 3>& truth,
                         const std::map<std::string, double>& timings = {});

}  // namespace ste::posterior
