#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "stayers/config.hpp"
#include "stayers/dgp.hpp"
#include "stayers/error.hpp"

namespace stayers {
namespace {

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

TEST(Simulate, NoiseFreeDifferencesTrackRegressors) {
  DgpSpec spec;
  spec.sd_a = 0.0;
  spec.additive.sd_v = 0.0;
  const auto d = simulate(spec, 500, 1);
  ASSERT_EQ(d.size(), 500U);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_NEAR(d.y2[i] - d.y1[i], d.x2[i] - d.x1[i], 1e-12);
  }
  EXPECT_EQ(d.unit_id.front(), "1");
  EXPECT_EQ(d.unit_id.back(), "500");
}

TEST(Simulate, StayerProbabilityExtremes) {
  DgpSpec spec;
  spec.regressors.stayer_prob = 1.0;
  auto d = simulate(spec, 300, 2);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(d.x1[i], d.x2[i]);
  spec.regressors.stayer_prob = 0.0;
  d = simulate(spec, 300, 2);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NE(d.x1[i], d.x2[i]);
}

TEST(Simulate, DeterministicAndPrefixStable) {
  DgpSpec spec;
  spec.family = DgpFamily::random_coefficient;
  const auto a = simulate(spec, 400, 3);
  const auto b = simulate(spec, 400, 3);
  const auto c = simulate(spec, 100, 3);
  const auto e = simulate(spec, 400, 4);
  EXPECT_EQ(a.y1, b.y1);
  EXPECT_EQ(a.y2, b.y2);
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(a.x1[i], c.x1[i]);
    EXPECT_EQ(a.y2[i], c.y2[i]);
  }
  EXPECT_NE(a.y1, e.y1);
}

TEST(Simulate, StayersAreTimeHomogeneous) {
  DgpSpec spec;
  spec.family = DgpFamily::random_coefficient;
  spec.regressors.stayer_prob = 1.0;
  const auto d = simulate(spec, 20000, 5);
  const double n = static_cast<double>(d.size());
  EXPECT_LT(ks_statistic(d.y1, d.y2), 1.63 * std::sqrt(2.0 / n));
}

// Share of (seed, x-bin) cells among stayers where the two periods pass a
// two-sample KS check at the 1% level, after standardizing with the given
// period-specific affine maps.
double homogeneous_bin_share(const DgpSpec& spec, bool correct) {
  int cells = 0, passed = 0;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const auto d = simulate(spec, 40000, 100 + seed);
    std::vector<double> xs;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (d.x1[i] == d.x2[i]) xs.push_back(d.x1[i]);
    }
    std::sort(xs.begin(), xs.end());
    const std::size_t bins = 10;
    for (std::size_t b = 0; b < bins; ++b) {
      const double lo = xs[b * xs.size() / bins];
      const double hi = b + 1 == bins ? INFINITY : xs[(b + 1) * xs.size() / bins];
      std::vector<double> y1, y2;
      for (std::size_t i = 0; i < d.size(); ++i) {
        const double x = d.x1[i];
        if (x != d.x2[i] || x < lo || x >= hi) continue;
        y1.push_back(correct ? (d.y1[i] - spec.mu1(x)) / spec.sigma1(x) : d.y1[i]);
        y2.push_back(correct ? (d.y2[i] - spec.mu2(x)) / spec.sigma2(x) : d.y2[i]);
      }
      const double m = static_cast<double>(y1.size());
      ++cells;
      if (ks_statistic(y1, y2) < 1.63 * std::sqrt(2.0 / m)) ++passed;
    }
  }
  return static_cast<double>(passed) / cells;
}

TEST(Simulate, StayersHomogeneousWithinBins) {
  DgpSpec additive;
  EXPECT_GE(homogeneous_bin_share(additive, false), 0.95);
  DgpSpec rc;
  rc.family = DgpFamily::random_coefficient;
  EXPECT_GE(homogeneous_bin_share(rc, false), 0.95);
  DgpSpec ls;
  ls.family = DgpFamily::location_scale;
  ls.mu2 = {3.0, 0.4};
  ls.sigma2 = {2.0, 0.3};
  EXPECT_GE(homogeneous_bin_share(ls, true), 0.95);
  EXPECT_LT(homogeneous_bin_share(ls, false), 0.5);
}

TEST(Simulate, LocationScaleBreaksHomogeneity) {
  DgpSpec spec;
  spec.family = DgpFamily::location_scale;
  spec.regressors.stayer_prob = 1.0;
  const auto d = simulate(spec, 5000, 6);
  EXPECT_GT(ks_statistic(d.y1, d.y2), 0.3);
}

TEST(Simulate, ValidationErrors) {
  DgpSpec spec;
  spec.regressors.stayer_prob = 1.5;
  EXPECT_THROW((void)simulate(spec, 10, 1), ConfigError);
  spec = {};
  spec.sd_a = -1.0;
  EXPECT_THROW((void)simulate(spec, 10, 1), ConfigError);
  spec = {};
  spec.family = DgpFamily::location_scale;
  spec.inner = DgpFamily::location_scale;
  EXPECT_THROW((void)simulate(spec, 10, 1), ConfigError);
}

TEST(Truth, AdditiveClosedForm) {
  DgpSpec spec;
  spec.additive.theta = 0.7;
  for (double x : {-1.0, 0.0, 1.3}) {
    const auto m = true_effect(spec, x, TruthKind::mean);
    EXPECT_TRUE(m.closed_form);
    EXPECT_EQ(m.value, 0.7);
    EXPECT_EQ(m.standard_error, 0.0);
    EXPECT_EQ(true_effect(spec, x, TruthKind::quantile, 0.2).value, 0.7);
    EXPECT_EQ(true_sigma(spec, x), 1.0);
    EXPECT_EQ(true_shift(spec, x), 0.0);
  }
}

TEST(Truth, LocationScaleClosedForm) {
  DgpSpec spec;
  spec.family = DgpFamily::location_scale;
  EXPECT_DOUBLE_EQ(true_sigma(spec, 0.4), 2.0);
  EXPECT_DOUBLE_EQ(true_shift(spec, 0.4), 3.0);
  EXPECT_DOUBLE_EQ(true_effect(spec, 0.4, TruthKind::time_averaged_mean).value, 1.5);
  EXPECT_DOUBLE_EQ(true_effect(spec, 0.4, TruthKind::time_averaged_quantile, 0.9).value, 1.5);

  // With a sloped scale the level enters through the averaged sigma slope.
  spec.sigma1 = {1.0, 0.2};
  spec.sigma2 = {2.0, 0.2};
  const double x = 0.5;
  const double level = spec.additive.theta * x + spec.rho * x;
  const double expected = 0.2 * level + 0.5 * (1.1 + 2.1) * spec.additive.theta;
  EXPECT_NEAR(true_effect(spec, x, TruthKind::time_averaged_mean).value, expected, 1e-12);
  EXPECT_THROW((void)true_effect(spec, x, TruthKind::mean), ConfigError);
}

TEST(Truth, RandomCoefficientOracleMatchesAnalyticMean) {
  DgpSpec spec;
  spec.family = DgpFamily::random_coefficient;
  OracleOptions opt;
  opt.n_oracle = 400'000;
  for (double x : {-0.5, 0.0, 0.5}) {
    const auto r = true_effect(spec, x, TruthKind::mean, 0.5, opt);
    EXPECT_FALSE(r.closed_form);
    EXPECT_GT(r.retained, 500U);
    EXPECT_GT(r.standard_error, 0.0);
    const double analytic = spec.random_coefficient.b2_mean +
                            spec.random_coefficient.b2_a * spec.rho * x;
    EXPECT_NEAR(r.value, analytic, std::max(4.0 * r.standard_error, 0.03));
  }
  spec.random_coefficient.b2_a = 0.0;
  const auto flat = true_effect(spec, 0.2, TruthKind::mean, 0.5, opt);
  EXPECT_NEAR(flat.value, 1.0, std::max(4.0 * flat.standard_error, 0.02));
}

TEST(Truth, OracleStableUnderDoubling) {
  DgpSpec spec;
  spec.family = DgpFamily::random_coefficient;
  int trials = 0, stable = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (double x : {-0.6, 0.0, 0.6}) {
      for (auto kind : {TruthKind::mean, TruthKind::quantile}) {
        OracleOptions opt;
        opt.seed = seed;
        opt.n_oracle = 100'000;
        const auto a = true_effect(spec, x, kind, 0.3, opt);
        opt.n_oracle = 200'000;
        const auto b = true_effect(spec, x, kind, 0.3, opt);
        ++trials;
        if (std::abs(a.value - b.value) < 2.0 * a.standard_error) ++stable;
      }
    }
  }
  EXPECT_GE(static_cast<double>(stable) / trials, 0.95) << stable << "/" << trials;
}

TEST(Truth, OracleNeedsRetainedUnits) {
  DgpSpec spec;
  spec.family = DgpFamily::random_coefficient;
  OracleOptions opt;
  opt.n_oracle = 2000;
  EXPECT_THROW((void)true_effect(spec, 0.0, TruthKind::mean, 0.5, opt), ConfigError);
}

TEST(Config, RoundTrip) {
  DgpSpec spec;
  spec.family = DgpFamily::location_scale;
  spec.inner = DgpFamily::random_coefficient;
  spec.link = HeterogeneityLink::first_period;
  spec.rho = 0.3;
  spec.random_coefficient.sd_eta = 0.35;
  spec.mu2 = {2.5, 0.1};
  KeyValues kv;
  dgp_to_config(spec, kv);
  const auto back = dgp_from_config(kv);
  EXPECT_EQ(back.family, spec.family);
  EXPECT_EQ(back.inner, spec.inner);
  EXPECT_EQ(back.link, spec.link);
  EXPECT_EQ(back.rho, 0.3);
  EXPECT_EQ(back.random_coefficient.sd_eta, 0.35);
  EXPECT_EQ(back.mu2.intercept, 2.5);
  EXPECT_EQ(back.mu2.slope, 0.1);
  EXPECT_EQ(simulate(back, 50, 7).y2, simulate(spec, 50, 7).y2);
  EXPECT_THROW((void)parse_dgp_family("probit"), ConfigError);
  EXPECT_EQ(parse_heterogeneity_link(to_string(HeterogeneityLink::independent)),
            HeterogeneityLink::independent);
}

}  // namespace
}  // namespace stayers
