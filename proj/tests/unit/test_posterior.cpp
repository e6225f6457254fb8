#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "ste/error.hpp"
#include "ste/posterior.hpp"

namespace {

using namespace ste::posterior;

std::vector<double> normal_draws(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2 * std::numbers::pi); }

TEST(Describe, MomentsAndWeighted) {
  const std::vector<double> v{1, 2, 3, 4};
  const auto s = describe(v);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.variance, 5.0 / 3.0);
  EXPECT_EQ(describe(std::vector<double>{7.0}).variance, 0.0);
  const std::vector<double> w{0, 1, 1, 0};
  const auto sw = describe_weighted(v, w);
  EXPECT_DOUBLE_EQ(sw.mean, 2.5);
  EXPECT_DOUBLE_EQ(sw.variance, 0.25);
  EXPECT_THROW(describe(std::vector<double>{}), ste::ConfigError);
}

TEST(CredibleInterval, OneToHundredAtNinety) {
  std::vector<double> v(100);
  std::iota(v.begin(), v.end(), 1.0);
  // Type-7 position (n - 1) p, evaluated independently.
  auto q = [](double p) {
    const double h = 99.0 * p;
    const double lo = std::floor(h);
    return (lo + 1.0) + (h - lo);
  };
  const auto ci = credible_interval(v, 0.9);
  EXPECT_NEAR(ci.lo, q(0.05), 1e-12);
  EXPECT_NEAR(ci.hi, q(0.95), 1e-12);
  EXPECT_NEAR(ci.lo, 5.95, 1e-12);
  EXPECT_NEAR(ci.hi, 95.05, 1e-12);
}

TEST(CredibleInterval, LimitsAndConstants) {
  std::vector<double> v{3, -1, 8, 2, 5};
  const auto wide = credible_interval(v, 1.0 - 1e-12);
  EXPECT_NEAR(wide.lo, -1.0, 1e-9);
  EXPECT_NEAR(wide.hi, 8.0, 1e-9);
  const auto flat = credible_interval(std::vector<double>(10, 4.2), 0.95);
  EXPECT_EQ(flat.lo, 4.2);
  EXPECT_EQ(flat.width(), 0.0);
  EXPECT_THROW(credible_interval(v, 1.0), ste::ConfigError);
  EXPECT_THROW(credible_interval(v, 0.0), ste::ConfigError);
}

TEST(CredibleInterval, WidthNonDecreasingInLevel) {
  const auto v = normal_draws(5000, 4);
  double last = 0.0;
  for (double level = 0.05; level < 1.0; level += 0.05) {
    const double w = credible_interval(v, level).width();
    EXPECT_GE(w, last);
    last = w;
  }
}

TEST(CredibleInterval, WeightedOnSupport) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> p{0.01, 0.2, 0.5, 0.28, 0.01};
  const auto ci = weighted_credible_interval(x, p, 0.95);
  EXPECT_EQ(ci.lo, 2.0);
  EXPECT_EQ(ci.hi, 4.0);
}

TEST(Histogram, AllEqualSamples) {
  const auto d = histogram(std::vector<double>(7, 2.0), 5);
  int occupied = 0;
  for (std::size_t b = 0; b < d.density.size(); ++b) {
    if (d.density[b] > 0) {
      ++occupied;
      EXPECT_NEAR(d.density[b], 1.0 / (d.edges[b + 1] - d.edges[b]), 1e-12);
    }
  }
  EXPECT_EQ(occupied, 1);
  EXPECT_NEAR(d.integral(), 1.0, 1e-12);
}

TEST(Histogram, UniformHeightsWithinMultinomialError) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u;
  const int n = 1'000'000;
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  std::vector<double> edges(11);
  for (int i = 0; i <= 10; ++i) edges[i] = i / 10.0;
  const auto d = histogram(v, edges);
  // Height = count / (n * 0.1); count ~ Binomial(n, 0.1).
  const double se = std::sqrt(n * 0.1 * 0.9) / (n * 0.1);
  for (double h : d.density) EXPECT_NEAR(h, 1.0, 3 * se);
  EXPECT_NEAR(d.integral(), 1.0, 1e-12);
}

TEST(Histogram, EmptyEdgesGetZero) {
  const std::vector<double> v{0.1, 0.2, 0.3};
  const std::vector<double> edges{0, 0.5, 1.0, 2.0};
  const auto d = histogram(v, edges);
  EXPECT_EQ(d.density[1], 0.0);
  EXPECT_EQ(d.density[2], 0.0);
  EXPECT_NEAR(d.integral(), 1.0, 1e-12);
}

TEST(Kde, TwoPointSymmetry) {
  const std::vector<double> v{-1.0, 1.0};
  KdeOptions o;
  o.bandwidth = 1.0;
  o.range = std::pair(-4.0, 4.0);
  o.points = 801;
  const auto d = gaussian_kde(v, o);
  for (std::size_t i = 0; i < d.grid.size(); ++i) EXPECT_NEAR(d.density[i], d.density[d.grid.size() - 1 - i], 1e-14);
  // With h equal to the half separation the mixture has a single flat-topped
  // mode at 0: f''(0) = 0 exactly, so 0 is the maximum.
  const auto top = std::max_element(d.density.begin(), d.density.end()) - d.density.begin();
  EXPECT_NEAR(d.grid[top], 0.0, 1e-9);
  EXPECT_NEAR(d.density[top], normal_pdf(1.0), 1e-12);
}

TEST(Kde, IntegratesToOne) {
  const auto v = normal_draws(2000, 9);
  const auto d = gaussian_kde(v);
  EXPECT_NEAR(d.integral(), 1.0, 1e-6);
  KdeOptions o;
  o.bandwidth = 0.05;
  EXPECT_NEAR(gaussian_kde(v, o).integral(), 1.0, 1e-6);
}

double sup_error(std::size_t n, std::uint64_t seed) {
  const auto v = normal_draws(n, seed);
  KdeOptions o;
  o.range = std::pair(-4.0, 4.0);
  const auto d = gaussian_kde(v, o);
  double worst = 0.0;
  for (std::size_t i = 0; i < d.grid.size(); ++i) worst = std::max(worst, std::abs(d.density[i] - normal_pdf(d.grid[i])));
  return worst;
}

TEST(Kde, MatchesNormalDensityAndImprovesWithN) {
  const double big = sup_error(100000, 1);
  EXPECT_LT(big, 0.01);
  EXPECT_LT(big, sup_error(1000, 1));
}

TEST(Kde, MatchesDirectEvaluation) {
  const auto v = normal_draws(300, 2);
  const auto d = gaussian_kde(v);
  for (std::size_t i = 0; i < d.grid.size(); i += 37) {
    EXPECT_NEAR(d.density[i], kde_pdf(v, d.bandwidth, d.grid[i]), 1e-15);
  }
}

TEST(Kde, SilvermanRuleAndDegenerateInput) {
  const auto v = normal_draws(1000, 3);
  const auto st = describe(v);
  std::vector<double> s = v;
  std::sort(s.begin(), s.end());
  const double iqr = quantile(s, 0.75) - quantile(s, 0.25);
  EXPECT_NEAR(silverman_bandwidth(v), 0.9 * std::min(st.sd, iqr / 1.34) * std::pow(1000.0, -0.2), 1e-14);
  EXPECT_THROW(gaussian_kde(std::vector<double>(5, 1.0)), ste::DomainError);
  EXPECT_THROW(silverman_bandwidth(std::vector<double>(5, 1.0)), ste::DomainError);
}

TEST(EnsembleKde, SingleAndRepeatedSets) {
  const auto v = normal_draws(500, 5);
  const auto single = gaussian_kde(v);
  const auto one = ensemble_kde({v});
  EXPECT_EQ(one.pooled.grid, single.grid);
  EXPECT_EQ(one.pooled.density, single.density);
  ASSERT_EQ(one.members.size(), 1u);
  // Ten copies: same bandwidth would change with n, so fix it.
  KdeOptions o;
  o.bandwidth = single.bandwidth;
  const auto ten = ensemble_kde(std::vector<std::vector<double>>(10, v), o);
  const auto ref = gaussian_kde(v, o);
  ASSERT_EQ(ten.pooled.grid.size(), ref.grid.size());
  for (std::size_t i = 0; i < ref.grid.size(); ++i) EXPECT_NEAR(ten.pooled.density[i], ref.density[i], 1e-12);
  EXPECT_EQ(ten.members.size(), 10u);
  for (const auto& m : ten.members) EXPECT_NEAR(m.integral(), 1.0, 1e-6);
}

TEST(Compare, IdenticalSourcesAndContainment) {
  Eigen::MatrixXd s(1000, 3);
  const auto a = normal_draws(3000, 8);
  for (int i = 0; i < 1000; ++i) s.row(i) << a[i] - 389, a[1000 + i] + 185, 0.1 * a[2000 + i] + 1.83;
  const auto r = compare({source_from_samples("dram", s), source_from_samples("bnn", s)}, {-389.0, 185.37, 1.83},
                         {{"dram", 100.0}, {"bnn", 2.0}});
  ASSERT_EQ(r.sources.size(), 2u);
  for (const auto& v : r.variance_ratios) EXPECT_DOUBLE_EQ(v.ratio, 1.0);
  EXPECT_EQ(r.variance_ratios.size(), 6u);
  for (const auto& src : r.sources)
    for (const auto& p : src.params) EXPECT_TRUE(p->contains_truth);
  bool found = false;
  for (const auto& t : r.timing_ratios) {
    if (t.numerator == "dram") {
      EXPECT_DOUBLE_EQ(t.ratio, 50.0);
      found = true;
    }
  }
  EXPECT_TRUE(found);
  EXPECT_NE(r.find("bnn"), nullptr);
  EXPECT_EQ(r.find("none"), nullptr);
  EXPECT_THROW(compare({source_from_samples("x", s)}, {0, 0, 0}), ste::ConfigError);
}

TEST(Compare, ProbabilitySourceHasNoMass) {
  std::vector<double> mid(100), p(100, 0.0);
  for (int j = 0; j < 100; ++j) mid[j] = -500 + 5 * (j + 0.5);
  p[22] = 1.0;  // bin of -387.5
  Eigen::MatrixXd s = Eigen::MatrixXd::Random(50, 3);
  const auto r = compare({source_from_probabilities("cls", mid, p, mid, p), source_from_samples("bnn", s)},
                         {-389.0, 185.37, 1.83});
  const auto* cls = r.find("cls");
  ASSERT_NE(cls, nullptr);
  EXPECT_FALSE(cls->params[2].has_value());
  EXPECT_DOUBLE_EQ(cls->params[0]->mean, -387.5);
  EXPECT_EQ(cls->params[0]->variance, 0.0);
}

}  // namespace
