#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stayers/basis.hpp"
#include "stayers/panel.hpp"
#include "stayers/regress.hpp"

namespace stayers {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

enum class EffectKind {
  mean_homogeneous,
  mean_overid_diagnostic,
  quantile_homogeneous,
  quantile_symmetric_diagnostic,
  sigma_moments,
  shift_moments,
  sigma_quantiles,
  shift_quantiles,
  mean_time_effects,
  quantile_time_effects,
  averaged_quantile,
  diff_outcome,
  cross_section_mean,
  cross_section_quantile,
  averaged_cross_section_quantile,
};

/// Identifying assumptions behind a curve. Curves from different regimes
/// estimate different objects and must not be compared as if they did not.
enum class Regime {
  time_homogeneity,
  location_scale_time_effects,
  conditional_independence,
  cross_section,
};

[[nodiscard]] std::string to_string(EffectKind kind);
[[nodiscard]] EffectKind parse_effect_kind(const std::string& text);
[[nodiscard]] std::string to_string(Regime regime);
[[nodiscard]] bool indexed_by_tau(EffectKind kind);
[[nodiscard]] Regime regime_of(EffectKind kind);

namespace flags {
inline constexpr std::uint32_t floored_variance = 1U << 0;
inline constexpr std::uint32_t boundary_clamp = 1U << 1;
inline constexpr std::uint32_t quantile_crossing = 1U << 2;
inline constexpr std::uint32_t excluded = 1U << 3;
inline constexpr std::uint32_t se_floored = 1U << 4;
inline constexpr std::uint32_t degenerate_band = 1U << 5;
}  // namespace flags

/// Pipe-separated flag names, empty when no flag is set.
[[nodiscard]] std::string flags_to_string(std::uint32_t f);

struct EffectPoint {
  double x = kNaN;
  double x2 = kNaN;  ///< second regressor, only for off-diagonal curves
  double tau = kNaN;
  double estimate = kNaN;
  double lower = kNaN;
  double upper = kNaN;
  std::uint32_t flags = 0;
};

struct EffectCurve {
  EffectKind kind = EffectKind::mean_homogeneous;
  Regime regime = Regime::time_homogeneity;
  std::vector<EffectPoint> points;
  std::vector<std::string> notes;

  [[nodiscard]] bool has_band() const;
  [[nodiscard]] std::vector<double> estimates() const;
};

/// Evaluation region: x values on the diagonal x1 = x2 and quantile indices.
struct EvalGrid {
  std::vector<double> xs;
  std::vector<double> taus;
  std::string provenance;

  /// Throws std::invalid_argument unless both grids are nonempty and strictly
  /// increasing with every tau in (0, 1).
  void validate() const;
};

[[nodiscard]] std::vector<double> default_tau_grid();

/// x grid spanning the [lower_q, upper_q] sample quantiles (type 7) of the
/// pooled regressor, with `points` equally spaced values.
[[nodiscard]] EvalGrid make_eval_grid(const PanelDataset& data, std::size_t points = 51,
                                      double lower_q = 0.10, double upper_q = 0.90,
                                      std::vector<double> taus = default_tau_grid());

[[nodiscard]] double sample_quantile(std::vector<double> values, double p);

struct EffectWithDiagnostic {
  EffectCurve effect;
  EffectCurve diagnostic;
};

/// Stayer mean effect d/dx2 [M2 - M1](x, x). The diagnostic is the gap to
/// the alternative estimate -d/dx1 [M2 - M1](x, x); both identify the same
/// effect under time homogeneity.
[[nodiscard]] EffectWithDiagnostic mean_effect_homogeneous(const LinearFit& mean1,
                                                           const LinearFit& mean2,
                                                           const BasisSpec& spec,
                                                           const EvalGrid& grid);

/// Stayer quantile effect d/dx2 [Q2 - Q1](tau | x, x) over grid x and tau;
/// the diagnostic curve carries the symmetric estimate d/dx1 [Q1 - Q2].
[[nodiscard]] EffectWithDiagnostic quantile_effect_homogeneous(const QuantileFit& q1,
                                                               const QuantileFit& q2,
                                                               const BasisSpec& spec,
                                                               const EvalGrid& grid);

enum class TimeEffectSource { moments, quantiles };

/// Scale ratio sigma(x) = sigma2(x)/sigma1(x) and location shift
/// mu2(x) - sigma(x) mu1(x) on the grid. Excluded points carry NaN.
struct TimeEffectFns {
  std::vector<double> xs;
  std::vector<double> sigma;
  std::vector<double> shift;
  std::vector<std::uint32_t> point_flags;
  TimeEffectSource source = TimeEffectSource::moments;
  std::array<double, 3> taus{kNaN, kNaN, kNaN};

  [[nodiscard]] EffectCurve sigma_curve() const;
  [[nodiscard]] EffectCurve shift_curve() const;
};

[[nodiscard]] TimeEffectFns scale_location_from_moments(const LinearFit& mean1,
                                                        const LinearFit& mean2,
                                                        const LinearFit& var1,
                                                        const LinearFit& var2,
                                                        const BasisSpec& spec,
                                                        const EvalGrid& grid);

/// Ratio of conditional (tau_upper - tau_lower) ranges and difference at
/// tau_location. Requires 0 < tau_lower < tau_upper < 1; points whose
/// period-1 range is not positive are excluded and flagged.
[[nodiscard]] TimeEffectFns scale_location_from_quantiles(const QuantileFit& q1,
                                                          const QuantileFit& q2,
                                                          const BasisSpec& spec,
                                                          const EvalGrid& grid,
                                                          double tau_upper = 0.9,
                                                          double tau_lower = 0.1,
                                                          double tau_location = 0.5);

/// Time-averaged mean effect under location-scale time effects:
/// [d1 M1 - d1 M2 / sigma] / 2 + [d2 M2 - sigma d2 M1] / 2 at (x, x).
[[nodiscard]] EffectCurve mean_effect_time_effects(const LinearFit& mean1,
                                                   const LinearFit& mean2,
                                                   const TimeEffectFns& te,
                                                   const BasisSpec& spec,
                                                   const EvalGrid& grid);

[[nodiscard]] EffectCurve quantile_effect_time_effects(const QuantileFit& q1,
                                                       const QuantileFit& q2,
                                                       const TimeEffectFns& te,
                                                       const BasisSpec& spec,
                                                       const EvalGrid& grid);

/// Integrates an (x, tau) curve against an empirical measure of x, using the
/// nearest grid x for each measure point. Points outside the curve's x range
/// are dropped and counted in the notes.
[[nodiscard]] EffectCurve averaged_quantile_effect(const EffectCurve& curve,
                                                   std::span<const double> measure);

enum class TransformKind { difference, period2, linear };

struct OutcomeTransform {
  TransformKind kind = TransformKind::difference;
  double lambda = 0.0;  ///< weight on y1 (linear only)
  double pi = 1.0;      ///< weight on y2 (linear only)

  [[nodiscard]] double apply(double y1, double y2) const;
};

/// Derivative in x2 of the conditional tau-quantile of psi(Y1, Y2) given
/// (X1, X2) = (x1, x2), reported over the full grid x grid. This identifies
/// a different object under conditional-independence assumptions, and the
/// curve is tagged with that regime.
[[nodiscard]] EffectCurve diff_outcome_effect(const PanelDataset& data, const BasisSpec& spec,
                                              const OutcomeTransform& transform,
                                              std::span<const double> taus, const EvalGrid& grid,
                                              std::span<const double> weights = {});

/// Cross-sectional comparator: per-period fits on a univariate basis in the
/// contemporaneous regressor, derivative averaged over the two periods.
/// Empty `taus` requests the mean version.
[[nodiscard]] EffectCurve cross_section_effect(const PanelDataset& data,
                                               const BasisSpec& univariate_spec,
                                               std::span<const double> taus, const EvalGrid& grid,
                                               std::span<const double> weights = {});

/// Same computation from precomputed per-period designs.
[[nodiscard]] EffectCurve cross_section_effect(const DesignMatrix& design1,
                                               const DesignMatrix& design2,
                                               std::span<const double> y1,
                                               std::span<const double> y2,
                                               const BasisSpec& univariate_spec,
                                               std::span<const double> taus, const EvalGrid& grid,
                                               std::span<const double> weights);

void to_json(nlohmann::json& j, const EffectCurve& curve);
/// Columns x, tau, estimate, lower, upper, flags (an x2 column follows x
/// for off-diagonal curves). Missing values are written as NA.
[[nodiscard]] std::string to_csv(const EffectCurve& curve);

}  // namespace stayers
