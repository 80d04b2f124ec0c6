#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "stayers/effects.hpp"
#include "stayers/pipeline.hpp"
#include "stayers/rng.hpp"

namespace stayers {

enum class WeightLawKind { exponential, multinomial, degenerate, custom };

/// Law of the bootstrap observation weights: nonnegative, mean one and
/// variance one (except the degenerate law, which is identically one).
struct WeightLaw {
  WeightLawKind kind = WeightLawKind::exponential;
  std::vector<double> values;  ///< custom support points
  std::vector<double> probs;   ///< custom probabilities

  /// Throws ConfigError for a custom law that is not a nonnegative
  /// distribution with mean 1 and variance 1.
  void validate() const;
};

/// "exponential", "multinomial", "degenerate", or "custom:v1@p1,v2@p2,...".
[[nodiscard]] WeightLaw parse_weight_law(const std::string& text);
[[nodiscard]] std::string to_string(const WeightLaw& law);

/// Multinomial weights are the counts of n draws with replacement.
[[nodiscard]] std::vector<double> draw_weights(std::size_t n, const WeightLaw& law,
                                               rng::Stream& stream);

enum class SeMethod { sd, iqr };

[[nodiscard]] std::string to_string(SeMethod method);
[[nodiscard]] SeMethod parse_se_method(const std::string& text);

/// Bootstrap deviations sqrt(n) (theta*_b - theta_hat) for one curve; rows
/// are draws, columns follow `points`.
struct CurveDraws {
  EffectKind kind = EffectKind::mean_homogeneous;
  Regime regime = Regime::time_homogeneity;
  std::vector<EffectPoint> points;  ///< point estimate with grid coordinates
  Eigen::MatrixXd z;
};

struct BootstrapOptions {
  std::size_t draws = 499;
  std::uint64_t seed = 1;
  WeightLaw law;
  unsigned threads = 0;  ///< 0 picks the hardware concurrency
};

struct BootstrapRun {
  std::size_t draws = 0;
  std::uint64_t seed = 0;
  WeightLaw law;
  std::size_t n = 0;
  std::size_t attempts = 0;  ///< successful plus redrawn draws
  std::vector<std::string> failures;
  std::uint64_t config_digest = 0;
  std::vector<CurveDraws> curves;
};

/// Reruns the pipeline under B weight draws. Draw b, attempt a uses the
/// bootstrap substream (a << 32) | b, so results do not depend on the number
/// of threads. Failed draws are redrawn; more than 5B attempts in total
/// raises NumericalError.
[[nodiscard]] BootstrapRun bootstrap_curves(const Pipeline& pipeline,
                                            const std::vector<EffectCurve>& estimates,
                                            const BootstrapOptions& options,
                                            std::uint64_t config_digest = 0);

struct UniformBand {
  std::vector<double> sigma;  ///< per-point scale of the deviations
  std::vector<std::uint32_t> point_flags;
  double t_crit = 0.0;
  double alpha = 0.1;
  SeMethod method = SeMethod::sd;
  std::size_t n = 0;
  bool degenerate = false;
};

/// Lower empirical quantile: order statistic ceil(p B) (1-based), p in (0, 1].
[[nodiscard]] double empirical_quantile(std::vector<double> values, double p);

/// Sup-t band: t*_b = max over included points of |z_b| / sigma, t_crit the
/// (1 - alpha) empirical quantile. Points whose estimate is missing are
/// excluded from the sup. Quantile-based steps need at least
/// `min_draws` draws.
[[nodiscard]] UniformBand uniform_band(const CurveDraws& draws, std::size_t n, double alpha,
                                       SeMethod method, std::size_t min_draws = 20);

/// Per-point (1 - alpha) quantiles of |z_b| / sigma from the same draws.
[[nodiscard]] std::vector<double> pointwise_t_crit(const CurveDraws& draws,
                                                   const UniformBand& band);

/// Writes theta_hat -/+ t_crit sigma / sqrt(n) into the curve's bounds.
[[nodiscard]] EffectCurve apply_band(EffectCurve curve, const UniformBand& band);

void to_json(nlohmann::json& j, const BootstrapRun& run);
void from_json(const nlohmann::json& j, BootstrapRun& run);
void to_json(nlohmann::json& j, const UniformBand& band);

}  // namespace stayers
