#include <gtest/gtest.h>

#include <cmath>

#include "stayers/dgp.hpp"
#include "stayers/effects.hpp"
#include "stayers/error.hpp"
#include "stayers/rng.hpp"

namespace stayers {
namespace {

const std::vector<double> kUnit(4000, 1.0);

PanelDataset noisy_panel(std::size_t n, std::uint64_t seed, double sd = 0.5) {
  DgpSpec spec;
  spec.sd_a = sd;
  spec.additive.sd_v = sd;
  return simulate(spec, n, seed);
}

struct Fits {
  BasisSpec spec;
  LinearFit m1, m2;
};

Fits mean_fits(const PanelDataset& d, BasisOptions opts = {}) {
  const auto spec = BasisSpec::make(opts, d.pooled_x());
  const auto design = design_matrix(spec, d);
  const std::vector<double> w(d.size(), 1.0);
  return {spec, wls_fit(design, d.y1, w, FitTarget::mean_period1),
          wls_fit(design, d.y2, w, FitTarget::mean_period2)};
}

EvalGrid small_grid(const PanelDataset& d, std::vector<double> taus = {0.25, 0.5, 0.75}) {
  return make_eval_grid(d, 7, 0.2, 0.8, std::move(taus));
}

TEST(Grid, SpansPooledQuantiles) {
  const auto d = noisy_panel(500, 1);
  const auto g = make_eval_grid(d, 11, 0.1, 0.9);
  EXPECT_EQ(g.xs.size(), 11U);
  EXPECT_DOUBLE_EQ(g.xs.front(), sample_quantile(d.pooled_x(), 0.1));
  EXPECT_NEAR(g.xs.back(), sample_quantile(d.pooled_x(), 0.9), 1e-12);
  EXPECT_EQ(g.taus, default_tau_grid());
  EXPECT_FALSE(g.provenance.empty());
  EXPECT_THROW((void)make_eval_grid(d, 5, 0.9, 0.1), std::invalid_argument);
  EvalGrid bad{{0.0, 0.0}, {0.5}, ""};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  EvalGrid bad_tau{{0.0}, {1.0}, ""};
  EXPECT_THROW(bad_tau.validate(), std::invalid_argument);
}

TEST(MeanHomogeneous, IdenticalFitsGiveZeroEffectAndDiagnostic) {
  const auto d = noisy_panel(400, 2);
  auto f = mean_fits(d);
  f.m2 = f.m1;
  f.m2.target = FitTarget::mean_period2;
  const auto r = mean_effect_homogeneous(f.m1, f.m2, f.spec, small_grid(d));
  for (const auto& p : r.effect.points) EXPECT_EQ(p.estimate, 0.0);
  for (const auto& p : r.diagnostic.points) EXPECT_EQ(p.estimate, 0.0);
  EXPECT_EQ(r.effect.regime, Regime::time_homogeneity);
  EXPECT_FALSE(r.effect.notes.empty());
}

TEST(MeanHomogeneous, NoiseFreeLinearModelIsExact) {
  DgpSpec spec;
  spec.sd_a = 0.0;
  spec.additive.sd_v = 0.0;
  spec.additive.theta = 1.7;
  const auto d = simulate(spec, 300, 3);
  const auto f = mean_fits(d, {BasisKind::raw_polynomial, BasisStructure::additive, 1});
  const auto r = mean_effect_homogeneous(f.m1, f.m2, f.spec, small_grid(d));
  for (const auto& p : r.effect.points) EXPECT_NEAR(p.estimate, 1.7, 1e-10);
  for (const auto& p : r.diagnostic.points) EXPECT_NEAR(p.estimate, 0.0, 1e-10);
}

TEST(MeanHomogeneous, RejectsMismatchedFits) {
  const auto d = noisy_panel(300, 4);
  const auto f = mean_fits(d);
  const auto g = mean_fits(d, {BasisKind::orthogonal_polynomial});
  EXPECT_THROW((void)mean_effect_homogeneous(f.m1, g.m2, f.spec, small_grid(d)),
               std::invalid_argument);
}

TEST(TimeEffects, UnitScaleCollapsesToSymmetrizedHomogeneous) {
  const auto d = noisy_panel(600, 5);
  const auto f = mean_fits(d);
  const auto grid = small_grid(d);
  TimeEffectFns te;
  te.xs = grid.xs;
  te.sigma.assign(grid.xs.size(), 1.0);
  te.shift.assign(grid.xs.size(), 0.0);
  te.point_flags.assign(grid.xs.size(), 0);
  const auto avg = mean_effect_time_effects(f.m1, f.m2, te, f.spec, grid);
  const auto hom = mean_effect_homogeneous(f.m1, f.m2, f.spec, grid);
  for (std::size_t i = 0; i < grid.xs.size(); ++i) {
    const double leading = hom.effect.points[i].estimate;
    const double lagging = leading - hom.diagnostic.points[i].estimate;
    EXPECT_NEAR(avg.points[i].estimate, 0.5 * (leading + lagging), 1e-13);
  }
  EXPECT_EQ(avg.regime, Regime::location_scale_time_effects);
}

TEST(TimeEffects, IdenticalPeriodsGiveUnitScaleZeroShift) {
  const auto d = noisy_panel(600, 6);
  auto f = mean_fits(d);
  f.m2 = f.m1;
  const auto design = design_matrix(f.spec, d);
  const auto v1 = variance_fit(design, d.y1, f.m1, std::vector<double>(d.size(), 1.0));
  const auto grid = small_grid(d);
  const auto te = scale_location_from_moments(f.m1, f.m2, v1, v1, f.spec, grid);
  for (std::size_t i = 0; i < grid.xs.size(); ++i) {
    EXPECT_DOUBLE_EQ(te.sigma[i], 1.0);
    EXPECT_NEAR(te.shift[i], 0.0, 1e-12);
  }
  const auto zero = mean_effect_time_effects(f.m1, f.m2, te, f.spec, grid);
  for (const auto& p : zero.points) EXPECT_NEAR(p.estimate, 0.0, 1e-12);
}

TEST(TimeEffects, ExactVarianceRatio) {
  const auto d = noisy_panel(600, 7);
  const auto f = mean_fits(d);
  const auto design = design_matrix(f.spec, d);
  const std::vector<double> w(d.size(), 1.0);
  const auto v1 = variance_fit(design, d.y1, f.m1, w);
  auto v2 = v1;
  v2.beta *= 4.0;
  v2.target = FitTarget::variance_period2;
  const auto te = scale_location_from_moments(f.m1, f.m2, v1, v2, f.spec, small_grid(d));
  for (double s : te.sigma) EXPECT_NEAR(s, 2.0, 1e-12);
  EXPECT_EQ(te.sigma_curve().kind, EffectKind::sigma_moments);
  EXPECT_EQ(te.shift_curve().kind, EffectKind::shift_moments);
}

TEST(TimeEffects, QuantileRouteIdentityAndPreconditions) {
  const auto d = noisy_panel(400, 8);
  const auto spec = BasisSpec::make({}, d.pooled_x());
  const auto design = design_matrix(spec, d);
  const std::vector<double> taus{0.1, 0.5, 0.9};
  const std::vector<double> w(d.size(), 1.0);
  const auto q1 = qr_fit(design, d.y1, taus, w, 1);
  auto q2 = q1;
  q2.period = 2;
  const auto grid = small_grid(d);
  const auto te = scale_location_from_quantiles(q1, q2, spec, grid);
  for (std::size_t i = 0; i < grid.xs.size(); ++i) {
    if (te.point_flags[i] & flags::excluded) continue;
    EXPECT_DOUBLE_EQ(te.sigma[i], 1.0);
    EXPECT_NEAR(te.shift[i], 0.0, 1e-12);
  }
  EXPECT_THROW((void)scale_location_from_quantiles(q1, q2, spec, grid, 0.1, 0.9, 0.5),
               std::invalid_argument);
  EXPECT_THROW((void)scale_location_from_quantiles(q1, q2, spec, grid, 0.9, 0.9, 0.5),
               std::invalid_argument);
}

TEST(TimeEffects, NonPositiveRangeExcludesPoint) {
  const auto d = noisy_panel(300, 9);
  const auto spec = BasisSpec::intercept_only();
  const auto design = design_matrix(spec, d);
  QuantileFit q;
  q.taus = {0.1, 0.5, 0.9};
  q.betas = {Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Constant(1, 1.0),
             Eigen::VectorXd::Constant(1, 1.0)};
  q.spec_digest = spec.digest();
  const auto grid = small_grid(d);
  const auto te = scale_location_from_quantiles(q, q, spec, grid);
  for (std::size_t i = 0; i < grid.xs.size(); ++i) {
    EXPECT_TRUE(te.point_flags[i] & flags::excluded);
    EXPECT_TRUE(std::isnan(te.sigma[i]));
  }
  const auto avg = quantile_effect_time_effects(q, q, te, spec, grid);
  for (const auto& p : avg.points) {
    EXPECT_TRUE(std::isnan(p.estimate));
    EXPECT_TRUE(p.flags & flags::excluded);
  }
  (void)design;
}

TEST(Averaged, ConstantCurveAndSingleAtom) {
  EffectCurve c;
  c.kind = EffectKind::quantile_homogeneous;
  for (double x : {0.0, 1.0, 2.0}) {
    for (double tau : {0.25, 0.75}) c.points.push_back({.x = x, .tau = tau, .estimate = tau * 10});
  }
  const std::vector<double> measure{0.1, 0.9, 1.7, 2.0};
  const auto avg = averaged_quantile_effect(c, measure);
  ASSERT_EQ(avg.points.size(), 2U);
  EXPECT_DOUBLE_EQ(avg.points[0].estimate, 2.5);
  EXPECT_DOUBLE_EQ(avg.points[1].estimate, 7.5);
  EXPECT_EQ(avg.kind, EffectKind::averaged_quantile);

  EffectCurve lin = c;
  for (auto& p : lin.points) p.estimate = 3.0 * p.x + p.tau;
  const std::vector<double> atom{1.0};
  EXPECT_DOUBLE_EQ(averaged_quantile_effect(lin, atom).points[1].estimate, 3.75);
}

TEST(Averaged, LinearCurveMatchesDirectSummationAndDropsOutside) {
  EffectCurve c;
  c.kind = EffectKind::quantile_time_effects;
  std::vector<double> xs;
  for (int i = 0; i <= 100; ++i) xs.push_back(i / 100.0);
  for (double x : xs) c.points.push_back({.x = x, .tau = 0.5, .estimate = 2.0 * x - 1.0});
  rng::Stream s(10, rng::Domain::test, 0);
  std::vector<double> measure;
  double direct = 0.0;
  for (int i = 0; i < 500; ++i) {
    const double m = s.uniform();
    measure.push_back(m);
    const double nearest = std::round(m * 100.0) / 100.0;
    direct += 2.0 * nearest - 1.0;
  }
  direct /= 500.0;
  measure.push_back(1.5);
  measure.push_back(-0.2);
  const auto avg = averaged_quantile_effect(c, measure);
  EXPECT_NEAR(avg.points[0].estimate, direct, 1e-12);
  bool noted = false;
  for (const auto& n : avg.notes) noted = noted || n.find("outside x grid: 2") != std::string::npos;
  EXPECT_TRUE(noted);

  EffectCurve doubled = c;
  for (auto& p : doubled.points) p.estimate *= 2.0;
  EXPECT_NEAR(averaged_quantile_effect(doubled, measure).points[0].estimate, 2.0 * direct, 1e-12);

  const std::vector<double> outside{5.0, 6.0};
  EXPECT_THROW((void)averaged_quantile_effect(c, outside), DataError);
}

TEST(DiffOutcome, IdenticalPeriodsGiveZero) {
  auto d = noisy_panel(300, 11);
  d.y2 = d.y1;
  const auto spec = BasisSpec::make({}, d.pooled_x());
  const auto grid = make_eval_grid(d, 3, 0.2, 0.8, {0.5});
  const std::vector<double> taus{0.25, 0.5};
  const auto c = diff_outcome_effect(d, spec, {}, taus, grid);
  EXPECT_EQ(c.points.size(), 3U * 3U * 2U);
  for (const auto& p : c.points) EXPECT_NEAR(p.estimate, 0.0, 1e-8);
  EXPECT_EQ(c.regime, Regime::conditional_independence);
  EXPECT_NE(c.notes.front().find("conditional-independence"), std::string::npos);
}

TEST(DiffOutcome, LinearComboReproducesPeriod2) {
  const auto d = noisy_panel(300, 12);
  const auto spec = BasisSpec::make({}, d.pooled_x());
  const auto grid = make_eval_grid(d, 3, 0.2, 0.8, {0.5});
  const std::vector<double> taus{0.5};
  const auto a = diff_outcome_effect(d, spec, {TransformKind::period2}, taus, grid);
  const auto b = diff_outcome_effect(d, spec, {TransformKind::linear, 0.0, 1.0}, taus, grid);
  ASSERT_EQ(a.points.size(), b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    EXPECT_EQ(a.points[i].estimate, b.points[i].estimate);
  }
}

TEST(DiffOutcome, IndependenceDesignRecoversSlope) {
  DgpSpec spec;
  spec.link = HeterogeneityLink::independent;
  spec.additive.theta = 0.8;
  const auto d = simulate(spec, 4000, 13);
  const auto basis = BasisSpec::make({BasisKind::raw_polynomial, BasisStructure::additive, 1},
                                     d.pooled_x());
  const auto grid = make_eval_grid(d, 3, 0.3, 0.7, {0.5});
  const std::vector<double> taus{0.5};
  const auto c = diff_outcome_effect(d, basis, {TransformKind::period2}, taus, grid);
  for (const auto& p : c.points) EXPECT_NEAR(p.estimate, 0.8, 0.08);
}

TEST(CrossSection, LinearSlopeAndIdenticalPeriods) {
  DgpSpec spec;
  spec.rho = 0.0;
  spec.additive.theta = 1.3;
  auto d = simulate(spec, 4000, 14);
  const auto uni = BasisSpec::make({BasisKind::raw_polynomial, BasisStructure::univariate, 1},
                                   d.pooled_x());
  const auto grid = small_grid(d);
  const auto c = cross_section_effect(d, uni, {}, grid);
  for (const auto& p : c.points) EXPECT_NEAR(p.estimate, 1.3, 0.05);
  EXPECT_EQ(c.regime, Regime::cross_section);

  d.x2 = d.x1;
  d.y2 = d.y1;
  const auto both = cross_section_effect(d, uni, {}, grid);
  const auto design = design_matrix(uni, d.x1, d.x1);
  const auto single = wls_fit(design, d.y1, std::vector<double>(d.size(), 1.0),
                              FitTarget::mean_period1);
  for (std::size_t i = 0; i < grid.xs.size(); ++i) {
    EXPECT_NEAR(both.points[i].estimate,
                predict(single, uni.eval(grid.xs[i], grid.xs[i])).d_x1, 1e-12);
  }
}

TEST(Properties, AffineOutcomeEquivariance) {
  const auto d = noisy_panel(800, 15);
  auto e = d;
  for (auto* v : {&e.y1, &e.y2}) {
    for (auto& y : *v) y = 2.5 * y - 4.0;
  }
  const auto grid = small_grid(d);
  const auto fa = mean_fits(d);
  const auto fb = mean_fits(e);
  const auto a = mean_effect_homogeneous(fa.m1, fa.m2, fa.spec, grid);
  const auto b = mean_effect_homogeneous(fb.m1, fb.m2, fb.spec, grid);
  const std::vector<double> w(d.size(), 1.0);
  const auto da = design_matrix(fa.spec, d);
  const auto db = design_matrix(fb.spec, e);
  const auto ta = scale_location_from_moments(fa.m1, fa.m2, variance_fit(da, d.y1, fa.m1, w),
                                              variance_fit(da, d.y2, fa.m2, w), fa.spec, grid);
  const auto tb = scale_location_from_moments(fb.m1, fb.m2, variance_fit(db, e.y1, fb.m1, w),
                                              variance_fit(db, e.y2, fb.m2, w), fb.spec, grid);
  for (std::size_t i = 0; i < grid.xs.size(); ++i) {
    EXPECT_NEAR(b.effect.points[i].estimate, 2.5 * a.effect.points[i].estimate, 1e-10);
    EXPECT_NEAR(b.diagnostic.points[i].estimate, 2.5 * a.diagnostic.points[i].estimate, 1e-10);
    EXPECT_NEAR(tb.sigma[i], ta.sigma[i], 1e-9);
  }
}

TEST(Output, CsvAndJsonLayout) {
  EffectCurve c;
  c.kind = EffectKind::mean_homogeneous;
  c.points.push_back({.x = 0.5, .estimate = 1.25, .lower = 1.0, .upper = 1.5});
  c.points.push_back({.x = 0.75, .flags = flags::excluded | flags::boundary_clamp});
  const auto csv = to_csv(c);
  EXPECT_NE(csv.find("regime=time-homogeneity"), std::string::npos);
  EXPECT_NE(csv.find("x,tau,estimate,lower,upper,flags\n"), std::string::npos);
  EXPECT_NE(csv.find("0.5,NA,1.25,1,1.5,\n"), std::string::npos);
  EXPECT_NE(csv.find("0.75,NA,NA,NA,NA,boundary-clamp|excluded\n"), std::string::npos);

  c.kind = EffectKind::diff_outcome;
  c.regime = Regime::conditional_independence;
  c.points[0].x2 = 0.25;
  EXPECT_NE(to_csv(c).find("x,x2,tau,estimate"), std::string::npos);
  const nlohmann::json j = c;
  EXPECT_EQ(j["regime"], "conditional-independence");
  EXPECT_TRUE(j["points"][1]["estimate"].is_null());
  EXPECT_EQ(j["points"][0]["x2"], 0.25);
}

TEST(Names, EffectKindsRoundTrip) {
  for (auto k : {EffectKind::mean_homogeneous, EffectKind::quantile_time_effects,
                 EffectKind::averaged_cross_section_quantile, EffectKind::diff_outcome}) {
    EXPECT_EQ(parse_effect_kind(to_string(k)), k);
  }
  EXPECT_THROW((void)parse_effect_kind("nope"), ConfigError);
  EXPECT_EQ(flags_to_string(0), "");
  EXPECT_EQ(flags_to_string(flags::floored_variance | flags::se_floored),
            "floored-variance|se-floored");
}

}  // namespace
}  // namespace stayers
