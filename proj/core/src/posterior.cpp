#include "ste/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "ste/error.hpp"

namespace ste::posterior {

Stats describe(std::span<const double> samples) {
  Stats s;
  s.n = samples.size();
  if (s.n == 0) throw ConfigError("cannot describe an empty sample");
  // Welford keeps long chains accurate.
  double mean = 0.0, m2 = 0.0;
  std::size_t k = 0;
  for (double x : samples) {
    ++k;
    const double d = x - mean;
    mean += d / static_cast<double>(k);
    m2 += d * (x - mean);
  }
  s.mean = mean;
  s.variance = s.n > 1 ? m2 / static_cast<double>(s.n - 1) : 0.0;
  s.sd = std::sqrt(s.variance);
  return s;
}

Stats describe_weighted(std::span<const double> values, std::span<const double> weights) {
  if (values.empty() || values.size() != weights.size()) throw ConfigError("weighted sample shape mismatch");
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) throw ConfigError("weights must have positive total");
  Stats s;
  s.n = values.size();
  for (std::size_t i = 0; i < values.size(); ++i) s.mean += weights[i] * values[i];
  s.mean /= total;
  for (std::size_t i = 0; i < values.size(); ++i) s.variance += weights[i] * (values[i] - s.mean) * (values[i] - s.mean);
  s.variance /= total;
  s.sd = std::sqrt(s.variance);
  return s;
}

double quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw ConfigError("quantile of an empty sample");
  p = std::clamp(p, 0.0, 1.0);
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Interval credible_interval(std::span<const double> samples, double level) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("credible level must lie in (0, 1)");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  return {quantile(sorted, 0.5 * (1.0 - level)), quantile(sorted, 0.5 * (1.0 + level))};
}

Interval weighted_credible_interval(std::span<const double> values, std::span<const double> weights, double level) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("credible level must lie in (0, 1)");
  if (values.empty() || values.size() != weights.size()) throw ConfigError("weighted sample shape mismatch");
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  const double lo_p = 0.5 * (1.0 - level) * total;
  const double hi_p = 0.5 * (1.0 + level) * total;
  Interval out{values.back(), values.back()};
  bool lo_set = false;
  double cdf = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    cdf += weights[i];
    if (!lo_set && cdf >= lo_p) {
      out.lo = values[i];
      lo_set = true;
    }
    if (cdf >= hi_p) {
      out.hi = values[i];
      break;
    }
  }
  return out;
}

double DensityEstimate::integral() const {
  switch (kind) {
    case DensityKind::histogram: {
      double acc = 0.0;
      for (std::size_t i = 0; i < density.size(); ++i) acc += density[i] * (edges[i + 1] - edges[i]);
      return acc;
    }
    case DensityKind::gaussian_kde: {
      double acc = 0.0;
      for (std::size_t i = 1; i < grid.size(); ++i) acc += 0.5 * (density[i] + density[i - 1]) * (grid[i] - grid[i - 1]);
      return acc;
    }
    case DensityKind::discrete:
      return std::accumulate(density.begin(), density.end(), 0.0);
  }
  return 0.0;
}

DensityEstimate histogram(std::span<const double> samples, std::span<const double> edges) {
  if (samples.empty()) throw ConfigError("histogram needs at least one sample");
  if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end()) ||
      std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
    throw ConfigError("histogram edges must be strictly increasing");
  }
  const std::size_t bins = edges.size() - 1;
  std::vector<double> counts(bins, 0.0);
  std::size_t inside = 0;
  for (double x : samples) {
    if (x < edges.front() || x > edges.back()) continue;
    auto it = std::upper_bound(edges.begin(), edges.end(), x);
    std::size_t b = static_cast<std::size_t>(it - edges.begin());
    b = b == 0 ? 0 : std::min(b - 1, bins - 1);
    counts[b] += 1.0;
    ++inside;
  }
  DensityEstimate d;
  d.kind = DensityKind::histogram;
  d.edges.assign(edges.begin(), edges.end());
  d.sample_count = samples.size();
  d.grid.resize(bins);
  d.density.resize(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    const double w = edges[b + 1] - edges[b];
    d.grid[b] = 0.5 * (edges[b] + edges[b + 1]);
    d.density[b] = inside > 0 ? counts[b] / (static_cast<double>(inside) * w) : 0.0;
  }
  return d;
}

DensityEstimate histogram(std::span<const double> samples, int bins) {
  if (samples.empty()) throw ConfigError("histogram needs at least one sample");
  if (bins < 1) throw ConfigError("histogram needs at least one bin");
  auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
  double lo = *mn, hi = *mx;
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  std::vector<double> edges(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) edges[i] = lo + (hi - lo) * i / bins;
  edges.back() = hi;
  return histogram(samples, edges);
}

double silverman_bandwidth(std::span<const double> samples) {
  if (samples.size() < 2) throw DomainError("bandwidth needs at least two samples");
  const Stats s = describe(samples);
  if (!(s.sd > 0.0)) throw DomainError("samples have zero spread");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
  const double spread = iqr > 0.0 ? std::min(s.sd, iqr / 1.34) : s.sd;
  return 0.9 * spread * std::pow(static_cast<double>(samples.size()), -0.2);
}

double kde_pdf(std::span<const double> samples, double h, double x) {
  if (!(h > 0.0)) throw DomainError("bandwidth must be positive");
  double acc = 0.0;
  for (double s : samples) {
    const double z = (x - s) / h;
    acc += std::exp(-0.5 * z * z);
  }
  return acc / (static_cast<double>(samples.size()) * h * std::sqrt(2.0 * std::numbers::pi));
}

namespace {

// Sum of kernels over sorted samples, skipping those more than 9 h away.
std::vector<double> kde_on_grid(const std::vector<double>& sorted, double h, const std::vector<double>& grid) {
  const double cutoff = 9.0 * h;
  const double norm = 1.0 / (static_cast<double>(sorted.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  std::vector<double> out(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double x = grid[g];
    auto begin = std::lower_bound(sorted.begin(), sorted.end(), x - cutoff);
    auto end = std::upper_bound(begin, sorted.end(), x + cutoff);
    double acc = 0.0;
    for (auto it = begin; it != end; ++it) {
      const double z = (x - *it) / h;
      acc += std::exp(-0.5 * z * z);
    }
    out[g] = acc * norm;
  }
  return out;
}

std::vector<double> make_kde_grid(const std::vector<double>& sorted, double h, const KdeOptions& opts) {
  double lo, hi;
  if (opts.range) {
    std::tie(lo, hi) = *opts.range;
  } else {
    lo = sorted.front() - opts.pad * h;
    hi = sorted.back() + opts.pad * h;
  }
  if (!(hi > lo)) throw ConfigError("KDE grid range is empty");
  // Keep at least four points per bandwidth so the trapezoid rule is exact to
  // well below 1e-6 for Gaussian kernels.
  const auto needed = static_cast<std::size_t>(std::ceil((hi - lo) / (0.25 * h))) + 1;
  const std::size_t points = std::max<std::size_t>(static_cast<std::size_t>(std::max(opts.points, 2)), needed);
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i) grid[i] = lo + (hi - lo) * static_cast<double>(i) / (points - 1);
  return grid;
}

}  // namespace

DensityEstimate gaussian_kde(std::span<const double> samples, const KdeOptions& opts) {
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  if (sorted.size() < 2 || sorted.front() == sorted.back()) throw DomainError("KDE needs at least two distinct samples");
  const double h = opts.bandwidth > 0.0 ? opts.bandwidth : silverman_bandwidth(sorted);

  DensityEstimate d;
  d.kind = DensityKind::gaussian_kde;
  d.sample_count = sorted.size();
  d.bandwidth = h;
  d.grid = make_kde_grid(sorted, h, opts);
  d.density = kde_on_grid(sorted, h, d.grid);
  return d;
}

EnsembleKde ensemble_kde(const std::vector<std::vector<double>>& sets, const KdeOptions& opts) {
  if (sets.empty()) throw ConfigError("ensemble KDE needs at least one set");
  std::vector<double> pooled;
  for (const auto& s : sets) pooled.insert(pooled.end(), s.begin(), s.end());

  EnsembleKde out;
  out.pooled = gaussian_kde(pooled, opts);
  for (const auto& s : sets) {
    std::vector<double> sorted(s.begin(), s.end());
    std::sort(sorted.begin(), sorted.end());
    DensityEstimate d;
    d.kind = DensityKind::gaussian_kde;
    d.sample_count = sorted.size();
    d.bandwidth = opts.bandwidth > 0.0 ? opts.bandwidth : silverman_bandwidth(sorted);
    d.grid = out.pooled.grid;
    d.density = kde_on_grid(sorted, d.bandwidth, d.grid);
    out.members.push_back(std::move(d));
  }
  return out;
}

Source source_from_samples(const std::string& tag, const Eigen::MatrixXd& samples) {
  if (samples.cols() < 2 || samples.rows() == 0) throw ConfigError("sample matrix must have rows and >= 2 columns");
  Source s;
  s.tag = tag;
  for (Eigen::Index c = 0; c < std::min<Eigen::Index>(3, samples.cols()); ++c) {
    Marginal m;
    m.values.assign(samples.col(c).data(), samples.col(c).data() + samples.rows());
    s.params[c] = std::move(m);
  }
  return s;
}

Source source_from_probabilities(const std::string& tag, std::span<const double> x_mid, std::span<const double> x_prob,
                                 std::span<const double> y_mid, std::span<const double> y_prob) {
  if (x_mid.size() != x_prob.size() || y_mid.size() != y_prob.size()) throw ConfigError("probability/bin size mismatch");
  Source s;
  s.tag = tag;
  s.params[0] = Marginal{{x_mid.begin(), x_mid.end()}, {x_prob.begin(), x_prob.end()}};
  s.params[1] = Marginal{{y_mid.begin(), y_mid.end()}, {y_prob.begin(), y_prob.end()}};
  return s;
}

const SourceReport* ComparisonReport::find(const std::string& tag) const {
  for (const auto& s : sources)
    if (s.tag == tag) return &s;
  return nullptr;
}

ComparisonReport compare(const std::vector<Source>& sources, const std::array<double, 3>& truth,
                         const std::map<std::string, double>& timings) {
  if (sources.size() < 2) throw ConfigError("comparison needs at least two sources");
  ComparisonReport report;
  report.truth = truth;
  report.timings = timings;

  for (const auto& src : sources) {
    SourceReport sr;
    sr.tag = src.tag;
    for (int p = 0; p < 3; ++p) {
      if (!src.params[p]) continue;
      const Marginal& m = *src.params[p];
      ParamStats ps;
      if (m.weights.empty()) {
        const Stats st = describe(m.values);
        ps.mean = st.mean;
        ps.variance = st.variance;
        ps.sd = st.sd;
        ps.interval95 = credible_interval(m.values, 0.95);
        sr.samples = std::max(sr.samples, m.values.size());
      } else {
        const Stats st = describe_weighted(m.values, m.weights);
        ps.mean = st.mean;
        ps.variance = st.variance;
        ps.sd = st.sd;
        ps.interval95 = weighted_credible_interval(m.values, m.weights, 0.95);
        sr.samples = std::max(sr.samples, m.values.size());
      }
      ps.contains_truth = ps.interval95.contains(truth[p]);
      sr.params[p] = ps;
    }
    report.sources.push_back(std::move(sr));
  }

  for (std::size_t a = 0; a < report.sources.size(); ++a) {
    for (std::size_t b = 0; b < report.sources.size(); ++b) {
      if (a == b) continue;
      const auto& sa = report.sources[a];
      const auto& sb = report.sources[b];
      for (int p = 0; p < 3; ++p) {
        if (!sa.params[p] || !sb.params[p] || !(sb.params[p]->variance > 0.0)) continue;
        report.variance_ratios.push_back({sa.tag, sb.tag, kParameterNames[p], sa.params[p]->variance / sb.params[p]->variance});
      }
      const auto ta = timings.find(sa.tag);
      const auto tb = timings.find(sb.tag);
      if (ta != timings.end() && tb != timings.end() && tb->second > 0.0) {
        report.timing_ratios.push_back({sa.tag, sb.tag, ta->second / tb->second});
      }
    }
  }
  return report;
}

}  // namespace ste::posterior
