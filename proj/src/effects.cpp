#include "stayers/effects.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>
#include <stdexcept>

#include "stayers/error.hpp"

namespace stayers {

namespace {

struct KindName {
  EffectKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {EffectKind::mean_homogeneous, "mean"},
    {EffectKind::mean_overid_diagnostic, "mean-overid"},
    {EffectKind::quantile_homogeneous, "quantile"},
    {EffectKind::quantile_symmetric_diagnostic, "quantile-symmetric"},
    {EffectKind::sigma_moments, "sigma-moments"},
    {EffectKind::shift_moments, "shift-moments"},
    {EffectKind::sigma_quantiles, "sigma-quantiles"},
    {EffectKind::shift_quantiles, "shift-quantiles"},
    {EffectKind::mean_time_effects, "mean-te"},
    {EffectKind::quantile_time_effects, "quantile-te"},
    {EffectKind::averaged_quantile, "averaged-quantile"},
    {EffectKind::diff_outcome, "diff-outcome"},
    {EffectKind::cross_section_mean, "cross-section-mean"},
    {EffectKind::cross_section_quantile, "cross-section-quantile"},
    {EffectKind::averaged_cross_section_quantile, "averaged-cross-section-quantile"},
};

void require_same_spec(std::uint64_t fit_digest, const BasisSpec& spec) {
  if (fit_digest != spec.digest()) {
    throw std::invalid_argument("fit was produced with a different basis spec");
  }
}

void require_same_fits(const LinearFit& a, const LinearFit& b, const BasisSpec& spec) {
  require_same_spec(a.spec_digest, spec);
  require_same_spec(b.spec_digest, spec);
  if (a.weights_digest != b.weights_digest) {
    throw std::invalid_argument("period fits used different weights");
  }
}

void require_same_fits(const QuantileFit& a, const QuantileFit& b, const BasisSpec& spec) {
  require_same_spec(a.spec_digest, spec);
  require_same_spec(b.spec_digest, spec);
  if (a.taus != b.taus) throw std::invalid_argument("period quantile fits use different tau grids");
  if (a.weights_digest != b.weights_digest) {
    throw std::invalid_argument("period fits used different weights");
  }
}

}  // namespace

Regime regime_of(EffectKind kind) {
  switch (kind) {
    case EffectKind::sigma_moments:
    case EffectKind::shift_moments:
    case EffectKind::sigma_quantiles:
    case EffectKind::shift_quantiles:
    case EffectKind::mean_time_effects:
    case EffectKind::quantile_time_effects:
      return Regime::location_scale_time_effects;
    case EffectKind::diff_outcome:
      return Regime::conditional_independence;
    case EffectKind::cross_section_mean:
    case EffectKind::cross_section_quantile:
    case EffectKind::averaged_cross_section_quantile:
      return Regime::cross_section;
    default:
      return Regime::time_homogeneity;
  }
}

namespace {

EffectCurve empty_curve(EffectKind kind) {
  EffectCurve curve;
  curve.kind = kind;
  curve.regime = regime_of(kind);
  return curve;
}

constexpr const char* kDiagonalCaveat =
    "curve traces effects for different stayer subpopulations X1 = X2 = x as x varies";

std::string format_value(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

nlohmann::json json_value(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

}  // namespace

std::string to_string(EffectKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "?";
}

EffectKind parse_effect_kind(const std::string& text) {
  for (const auto& [k, name] : kKindNames) {
    if (text == name) return k;
  }
  throw ConfigError("unknown effect kind '" + text + "'");
}

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::time_homogeneity:
      return "time-homogeneity";
    case Regime::location_scale_time_effects:
      return "time-homogeneity-up-to-location-scale";
    case Regime::conditional_independence:
      return "conditional-independence";
    case Regime::cross_section:
      return "cross-section-no-panel-correction";
  }
  return "?";
}

bool indexed_by_tau(EffectKind kind) {
  switch (kind) {
    case EffectKind::quantile_homogeneous:
    case EffectKind::quantile_symmetric_diagnostic:
    case EffectKind::quantile_time_effects:
    case EffectKind::averaged_quantile:
    case EffectKind::diff_outcome:
    case EffectKind::cross_section_quantile:
    case EffectKind::averaged_cross_section_quantile:
      return true;
    default:
      return false;
  }
}

std::string flags_to_string(std::uint32_t f) {
  static constexpr std::pair<std::uint32_t, const char*> names[] = {
      {flags::floored_variance, "floored-variance"}, {flags::boundary_clamp, "boundary-clamp"},
      {flags::quantile_crossing, "quantile-crossing"}, {flags::excluded, "excluded"},
      {flags::se_floored, "se-floored"},              {flags::degenerate_band, "degenerate-band"},
  };
  std::string out;
  for (const auto& [bit, name] : names) {
    if (f & bit) {
      if (!out.empty()) out += '|';
      out += name;
    }
  }
  return out;
}

bool EffectCurve::has_band() const {
  return std::any_of(points.begin(), points.end(),
                     [](const EffectPoint& p) { return std::isfinite(p.lower); });
}

std::vector<double> EffectCurve::estimates() const {
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(p.estimate);
  return out;
}

void EvalGrid::validate() const {
  if (xs.empty() || taus.empty()) throw std::invalid_argument("evaluation grids must be nonempty");
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (!(xs[i] > xs[i - 1])) throw std::invalid_argument("x grid must be strictly increasing");
  }
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (!(taus[i] > 0.0 && taus[i] < 1.0)) throw std::invalid_argument("tau grid must lie in (0,1)");
    if (i > 0 && !(taus[i] > taus[i - 1])) {
      throw std::invalid_argument("tau grid must be strictly increasing");
    }
  }
}

std::vector<double> default_tau_grid() {
  std::vector<double> taus;
  for (int i = 1; i <= 9; ++i) taus.push_back(i / 10.0);
  return taus;
}

double sample_quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

EvalGrid make_eval_grid(const PanelDataset& data, std::size_t points, double lower_q,
                        double upper_q, std::vector<double> taus) {
  if (points < 1) throw std::invalid_argument("x grid needs at least one point");
  if (!(lower_q >= 0.0 && upper_q <= 1.0 && lower_q < upper_q)) {
    throw std::invalid_argument("grid quantiles must satisfy 0 <= lower < upper <= 1");
  }
  const auto pooled = data.pooled_x();
  const double lo = sample_quantile(pooled, lower_q);
  const double hi = sample_quantile(pooled, upper_q);
  EvalGrid grid;
  if (points == 1 || !(hi > lo)) {
    grid.xs = {0.5 * (lo + hi)};
  } else {
    for (std::size_t i = 0; i < points; ++i) {
      grid.xs.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1));
    }
  }
  grid.taus = std::move(taus);
  std::ostringstream prov;
  prov << "pooled-x sample quantiles [" << lower_q << ", " << upper_q << "], " << grid.xs.size()
       << " points";
  grid.provenance = prov.str();
  grid.validate();
  return grid;
}

EffectWithDiagnostic mean_effect_homogeneous(const LinearFit& mean1, const LinearFit& mean2,
                                             const BasisSpec& spec, const EvalGrid& grid) {
  require_same_fits(mean1, mean2, spec);
  EffectWithDiagnostic out{empty_curve(EffectKind::mean_homogeneous),
                           empty_curve(EffectKind::mean_overid_diagnostic)};
  out.effect.notes.push_back(kDiagonalCaveat);
  for (double x : grid.xs) {
    const BasisEval basis = spec.eval(x, x);
    const Prediction p1 = predict(mean1, basis);
    const Prediction p2 = predict(mean2, basis);
    const double leading = p2.d_x2 - p1.d_x2;
    const double lagging = p1.d_x1 - p2.d_x1;
    const std::uint32_t f = basis.clamped ? flags::boundary_clamp : 0U;
    out.effect.points.push_back({.x = x, .estimate = leading, .flags = f});
    out.diagnostic.points.push_back({.x = x, .estimate = leading - lagging, .flags = f});
  }
  return out;
}

EffectWithDiagnostic quantile_effect_homogeneous(const QuantileFit& q1, const QuantileFit& q2,
                                                 const BasisSpec& spec, const EvalGrid& grid) {
  require_same_fits(q1, q2, spec);
  EffectWithDiagnostic out{empty_curve(EffectKind::quantile_homogeneous),
                           empty_curve(EffectKind::quantile_symmetric_diagnostic)};
  out.effect.notes.push_back(kDiagonalCaveat);
  for (double x : grid.xs) {
    const BasisEval basis = spec.eval(x, x);
    std::uint32_t f = basis.clamped ? flags::boundary_clamp : 0U;
    if (quantile_crossing(q1, basis) || quantile_crossing(q2, basis)) f |= flags::quantile_crossing;
    for (double tau : grid.taus) {
      const Prediction p1 = predict(q1, q1.index_of(tau), basis);
      const Prediction p2 = predict(q2, q2.index_of(tau), basis);
      out.effect.points.push_back({.x = x, .tau = tau, .estimate = p2.d_x2 - p1.d_x2, .flags = f});
      out.diagnostic.points.push_back(
          {.x = x, .tau = tau, .estimate = p1.d_x1 - p2.d_x1, .flags = f});
    }
  }
  return out;
}

EffectCurve TimeEffectFns::sigma_curve() const {
  EffectCurve curve = empty_curve(source == TimeEffectSource::moments ? EffectKind::sigma_moments
                                                                      : EffectKind::sigma_quantiles);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    curve.points.push_back({.x = xs[i], .estimate = sigma[i], .flags = point_flags[i]});
  }
  curve.notes.push_back("normalization sigma1 = 1, mu1 = 0 gives sigma2 = sigma");
  return curve;
}

EffectCurve TimeEffectFns::shift_curve() const {
  EffectCurve curve = empty_curve(source == TimeEffectSource::moments ? EffectKind::shift_moments
                                                                      : EffectKind::shift_quantiles);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    curve.points.push_back({.x = xs[i], .estimate = shift[i], .flags = point_flags[i]});
  }
  curve.notes.push_back("normalization sigma1 = 1, mu1 = 0 gives mu2 = shift");
  return curve;
}

TimeEffectFns scale_location_from_moments(const LinearFit& mean1, const LinearFit& mean2,
                                          const LinearFit& var1, const LinearFit& var2,
                                          const BasisSpec& spec, const EvalGrid& grid) {
  require_same_fits(mean1, mean2, spec);
  require_same_fits(var1, var2, spec);
  if (!is_variance(var1.target) || !is_variance(var2.target)) {
    throw std::invalid_argument("scale_location_from_moments needs variance fits");
  }
  TimeEffectFns te;
  te.source = TimeEffectSource::moments;
  for (double x : grid.xs) {
    const BasisEval basis = spec.eval(x, x);
    const Prediction m1 = predict(mean1, basis);
    const Prediction m2 = predict(mean2, basis);
    const Prediction v1 = predict(var1, basis);
    const Prediction v2 = predict(var2, basis);
    std::uint32_t f = basis.clamped ? flags::boundary_clamp : 0U;
    if (v1.floored || v2.floored) f |= flags::floored_variance;
    const double sigma = std::sqrt(v2.value / v1.value);
    te.xs.push_back(x);
    te.sigma.push_back(sigma);
    te.shift.push_back(m2.value - sigma * m1.value);
    te.point_flags.push_back(f);
  }
  return te;
}

TimeEffectFns scale_location_from_quantiles(const QuantileFit& q1, const QuantileFit& q2,
                                            const BasisSpec& spec, const EvalGrid& grid,
                                            double tau_upper, double tau_lower,
                                            double tau_location) {
  if (!(tau_lower > 0.0 && tau_upper < 1.0 && tau_lower < tau_upper)) {
    throw std::invalid_argument("scale quantiles must satisfy 0 < tau_lower < tau_upper < 1");
  }
  if (!(tau_location > 0.0 && tau_location < 1.0)) {
    throw std::invalid_argument("location quantile must lie in (0, 1)");
  }
  require_same_fits(q1, q2, spec);
  const std::size_t iu = q1.index_of(tau_upper);
  const std::size_t il = q1.index_of(tau_lower);
  const std::size_t im = q1.index_of(tau_location);
  TimeEffectFns te;
  te.source = TimeEffectSource::quantiles;
  te.taus = {tau_upper, tau_lower, tau_location};
  for (double x : grid.xs) {
    const BasisEval basis = spec.eval(x, x);
    std::uint32_t f = basis.clamped ? flags::boundary_clamp : 0U;
    const double range1 = predict(q1, iu, basis).value - predict(q1, il, basis).value;
    const double range2 = predict(q2, iu, basis).value - predict(q2, il, basis).value;
    te.xs.push_back(x);
    if (!(range1 > 0.0)) {
      te.sigma.push_back(kNaN);
      te.shift.push_back(kNaN);
      te.point_flags.push_back(f | flags::excluded);
      continue;
    }
    const double sigma = range2 / range1;
    te.sigma.push_back(sigma);
    te.shift.push_back(predict(q2, im, basis).value - sigma * predict(q1, im, basis).value);
    te.point_flags.push_back(f);
  }
  return te;
}

namespace {

// Time-averaged effect from the two periods' partial derivatives at (x, x).
double symmetrized(double d1_p1, double d1_p2, double d2_p1, double d2_p2, double sigma) {
  return 0.5 * (d1_p1 - d1_p2 / sigma) + 0.5 * (d2_p2 - sigma * d2_p1);
}

void require_grid_match(const TimeEffectFns& te, const EvalGrid& grid) {
  if (te.xs != grid.xs) throw std::invalid_argument("time effects were computed on another grid");
}

}  // namespace

EffectCurve mean_effect_time_effects(const LinearFit& mean1, const LinearFit& mean2,
                                     const TimeEffectFns& te, const BasisSpec& spec,
                                     const EvalGrid& grid) {
  require_same_fits(mean1, mean2, spec);
  require_grid_match(te, grid);
  EffectCurve curve = empty_curve(EffectKind::mean_time_effects);
  curve.notes.push_back(kDiagonalCaveat);
  for (std::size_t i = 0; i < grid.xs.size(); ++i) {
    const double x = grid.xs[i];
    const double sigma = te.sigma[i];
    std::uint32_t f = te.point_flags[i];
    if (!(std::isfinite(sigma) && sigma > 0.0)) {
      curve.points.push_back({.x = x, .flags = f | flags::excluded});
      continue;
    }
    const BasisEval basis = spec.eval(x, x);
    const Prediction p1 = predict(mean1, basis);
    const Prediction p2 = predict(mean2, basis);
    curve.points.push_back(
        {.x = x, .estimate = symmetrized(p1.d_x1, p2.d_x1, p1.d_x2, p2.d_x2, sigma), .flags = f});
  }
  return curve;
}

EffectCurve quantile_effect_time_effects(const QuantileFit& q1, const QuantileFit& q2,
                                         const TimeEffectFns& te, const BasisSpec& spec,
                                         const EvalGrid& grid) {
  require_same_fits(q1, q2, spec);
  require_grid_match(te, grid);
  EffectCurve curve = empty_curve(EffectKind::quantile_time_effects);
  curve.notes.push_back(kDiagonalCaveat);
  for (std::size_t i = 0; i < grid.xs.size(); ++i) {
    const double x = grid.xs[i];
    const double sigma = te.sigma[i];
    const BasisEval basis = spec.eval(x, x);
    std::uint32_t f = te.point_flags[i];
    if (quantile_crossing(q1, basis) || quantile_crossing(q2, basis)) f |= flags::quantile_crossing;
    const bool usable = std::isfinite(sigma) && sigma > 0.0;
    for (double tau : grid.taus) {
      if (!usable) {
        curve.points.push_back({.x = x, .tau = tau, .flags = f | flags::excluded});
        continue;
      }
      const Prediction p1 = predict(q1, q1.index_of(tau), basis);
      const Prediction p2 = predict(q2, q2.index_of(tau), basis);
      curve.points.push_back({.x = x,
                              .tau = tau,
                              .estimate = symmetrized(p1.d_x1, p2.d_x1, p1.d_x2, p2.d_x2, sigma),
                              .flags = f});
    }
  }
  return curve;
}

EffectCurve averaged_quantile_effect(const EffectCurve& curve, std::span<const double> measure) {
  if (!indexed_by_tau(curve.kind) || curve.kind == EffectKind::diff_outcome) {
    throw std::invalid_argument("averaging needs an (x, tau) curve on the diagonal");
  }
  std::vector<double> xs;
  std::vector<double> taus;
  for (const auto& p : curve.points) {
    if (std::find(xs.begin(), xs.end(), p.x) == xs.end()) xs.push_back(p.x);
    if (std::find(taus.begin(), taus.end(), p.tau) == taus.end()) taus.push_back(p.tau);
  }
  if (xs.empty()) throw std::invalid_argument("empty curve");
  std::sort(xs.begin(), xs.end());
  std::sort(taus.begin(), taus.end());

  // Multiplicity of each grid x under the retained measure.
  std::vector<std::size_t> mass(xs.size(), 0);
  std::size_t dropped = 0;
  for (double m : measure) {
    if (!(m >= xs.front() && m <= xs.back())) {
      ++dropped;
      continue;
    }
    const auto it = std::lower_bound(xs.begin(), xs.end(), m);
    auto idx = static_cast<std::size_t>(it - xs.begin());
    if (idx > 0 && (idx == xs.size() || m - xs[idx - 1] <= xs[idx] - m)) --idx;
    ++mass[idx];
  }
  const std::size_t retained = measure.size() - dropped;
  if (retained == 0) throw DataError("no measure points fall inside the x grid");

  EffectCurve out = empty_curve(curve.kind == EffectKind::cross_section_quantile
                                    ? EffectKind::averaged_cross_section_quantile
                                    : EffectKind::averaged_quantile);
  out.regime = curve.regime;
  out.notes.push_back("source curve: " + to_string(curve.kind));
  out.notes.push_back("measure points dropped outside x grid: " + std::to_string(dropped));
  for (double tau : taus) {
    double sum = 0.0;
    double weight = 0.0;
    std::uint32_t f = 0;
    for (const auto& p : curve.points) {
      if (p.tau != tau) continue;
      const auto idx = static_cast<std::size_t>(std::lower_bound(xs.begin(), xs.end(), p.x) - xs.begin());
      if (mass[idx] == 0) continue;
      f |= p.flags;
      if (!std::isfinite(p.estimate)) continue;
      sum += static_cast<double>(mass[idx]) * p.estimate;
      weight += static_cast<double>(mass[idx]);
    }
    out.points.push_back({.tau = tau, .estimate = weight > 0.0 ? sum / weight : kNaN, .flags = f});
  }
  return out;
}

double OutcomeTransform::apply(double y1, double y2) const {
  switch (kind) {
    case TransformKind::difference:
      return y2 - y1;
    case TransformKind::period2:
      return y2;
    case TransformKind::linear:
      return lambda * y1 + pi * y2;
  }
  return kNaN;
}

EffectCurve diff_outcome_effect(const PanelDataset& data, const BasisSpec& spec,
                                const OutcomeTransform& transform, std::span<const double> taus,
                                const EvalGrid& grid, std::span<const double> weights) {
  data.validate();
  if (transform.kind == TransformKind::linear && !(transform.pi != 0.0)) {
    throw std::invalid_argument("linear transform needs a nonzero weight on y2");
  }
  const DesignMatrix design = design_matrix(spec, data);
  std::vector<double> outcome(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) outcome[i] = transform.apply(data.y1[i], data.y2[i]);
  std::vector<double> ones;
  if (weights.empty()) {
    ones.assign(data.size(), 1.0);
    weights = ones;
  }
  const QuantileFit fit = qr_fit(design, outcome, taus, weights, 2);

  EffectCurve curve = empty_curve(EffectKind::diff_outcome);
  curve.notes.push_back(
      "requires conditional-independence assumptions (transitory shocks independent of "
      "regressors given the fixed effect; fixed effect independent of x2 given x1); not "
      "comparable with time-homogeneity curves");
  for (double x1 : grid.xs) {
    for (double x2 : grid.xs) {
      const BasisEval basis = spec.eval(x1, x2);
      std::uint32_t f = basis.clamped ? flags::boundary_clamp : 0U;
      if (quantile_crossing(fit, basis)) f |= flags::quantile_crossing;
      for (std::size_t k = 0; k < fit.taus.size(); ++k) {
        curve.points.push_back({.x = x1,
                                .x2 = x2,
                                .tau = fit.taus[k],
                                .estimate = predict(fit, k, basis).d_x2,
                                .flags = f});
      }
    }
  }
  return curve;
}

EffectCurve cross_section_effect(const DesignMatrix& design1, const DesignMatrix& design2,
                                 std::span<const double> y1, std::span<const double> y2,
                                 const BasisSpec& univariate_spec, std::span<const double> taus,
                                 const EvalGrid& grid, std::span<const double> weights) {
  if (univariate_spec.structure() != BasisStructure::univariate &&
      univariate_spec.kind() != BasisKind::intercept_only) {
    throw std::invalid_argument("cross-section comparator needs a univariate basis");
  }
  require_same_spec(design1.spec_digest, univariate_spec);
  require_same_spec(design2.spec_digest, univariate_spec);
  const bool mean = taus.empty();
  EffectCurve curve = empty_curve(mean ? EffectKind::cross_section_mean
                                       : EffectKind::cross_section_quantile);
  curve.notes.push_back("conditions on contemporaneous x only; ignores endogeneity");
  if (mean) {
    const LinearFit f1 = wls_fit(design1, y1, weights, FitTarget::mean_period1);
    const LinearFit f2 = wls_fit(design2, y2, weights, FitTarget::mean_period2);
    for (double x : grid.xs) {
      const BasisEval basis = univariate_spec.eval(x, x);
      curve.points.push_back({.x = x,
                              .estimate = 0.5 * (predict(f1, basis).d_x1 + predict(f2, basis).d_x1),
                              .flags = basis.clamped ? flags::boundary_clamp : 0U});
    }
    return curve;
  }
  const QuantileFit q1 = qr_fit(design1, y1, taus, weights, 1);
  const QuantileFit q2 = qr_fit(design2, y2, taus, weights, 2);
  for (double x : grid.xs) {
    const BasisEval basis = univariate_spec.eval(x, x);
    std::uint32_t f = basis.clamped ? flags::boundary_clamp : 0U;
    if (quantile_crossing(q1, basis) || quantile_crossing(q2, basis)) f |= flags::quantile_crossing;
    for (std::size_t k = 0; k < q1.taus.size(); ++k) {
      curve.points.push_back(
          {.x = x,
           .tau = q1.taus[k],
           .estimate = 0.5 * (predict(q1, k, basis).d_x1 + predict(q2, k, basis).d_x1),
           .flags = f});
    }
  }
  return curve;
}

EffectCurve cross_section_effect(const PanelDataset& data, const BasisSpec& univariate_spec,
                                 std::span<const double> taus, const EvalGrid& grid,
                                 std::span<const double> weights) {
  data.validate();
  const DesignMatrix d1 = design_matrix(univariate_spec, data.x1, data.x1);
  const DesignMatrix d2 = design_matrix(univariate_spec, data.x2, data.x2);
  std::vector<double> ones;
  if (weights.empty()) {
    ones.assign(data.size(), 1.0);
    weights = ones;
  }
  return cross_section_effect(d1, d2, data.y1, data.y2, univariate_spec, taus, grid, weights);
}

void to_json(nlohmann::json& j, const EffectCurve& curve) {
  nlohmann::json pts = nlohmann::json::array();
  const bool off_diagonal = curve.kind == EffectKind::diff_outcome;
  for (const auto& p : curve.points) {
    nlohmann::json pj = {{"x", json_value(p.x)},
                         {"tau", json_value(p.tau)},
                         {"estimate", json_value(p.estimate)},
                         {"lower", json_value(p.lower)},
                         {"upper", json_value(p.upper)},
                         {"flags", flags_to_string(p.flags)}};
    if (off_diagonal) pj["x2"] = json_value(p.x2);
    pts.push_back(pj);
  }
  j = {{"kind", to_string(curve.kind)},
       {"regime", to_string(curve.regime)},
       {"notes", curve.notes},
       {"points", pts}};
}

std::string to_csv(const EffectCurve& curve) {
  const bool off_diagonal = curve.kind == EffectKind::diff_outcome;
  std::ostringstream out;
  out << "# kind=" << to_string(curve.kind) << " regime=" << to_string(curve.regime) << '\n';
  out << (off_diagonal ? "x,x2,tau,estimate,lower,upper,flags\n" : "x,tau,estimate,lower,upper,flags\n");
  for (const auto& p : curve.points) {
    out << format_value(p.x) << ',';
    if (off_diagonal) out << format_value(p.x2) << ',';
    out << format_value(p.tau) << ',' << format_value(p.estimate) << ',' << format_value(p.lower)
        << ',' << format_value(p.upper) << ',' << flags_to_string(p.flags) << '\n';
  }
  return out.str();
}

}  // namespace stayers
