#pragma once

#include <cstdint>
#include <string>

#include "stayers/config.hpp"
#include "stayers/panel.hpp"

namespace stayers {

enum class DgpFamily { additive_linear, random_coefficient, location_scale };

/// How the heterogeneity A depends on the regressors: through the period
/// average, through the first-period value, or not at all (the
/// conditional-independence design).
enum class HeterogeneityLink { period_average, first_period, independent };

/// X1 ~ N(mean, sd^2). With probability stayer_prob the unit is a stayer
/// (X2 = X1); otherwise X2 = X1 + N(0, change_sd^2).
struct RegressorLaw {
  double mean = 0.0;
  double sd = 1.0;
  double stayer_prob = 0.15;
  double change_sd = 0.5;
};

/// phi(x, U_t) = theta x + A + sd_v V_t with A = rho link(X) + sd_a eps.
struct AdditiveLinearParams {
  double theta = 1.0;
  double sd_v = 0.5;
};

/// phi(x, U_t) = beta1(U_t) + beta2(U_t) x with
///   beta1 = A + sd_v1 V_t1,
///   beta2 = b2_mean + b2_a A + sd_eta eta + sd_v2 V_t2.
struct RandomCoefficientParams {
  double sd_v1 = 0.5;
  double b2_mean = 1.0;
  double b2_a = 0.5;
  double sd_eta = 0.2;
  double sd_v2 = 0.1;
};

struct Affine {
  double intercept = 0.0;
  double slope = 0.0;
  [[nodiscard]] double operator()(double x) const { return intercept + slope * x; }
};

/// Y_t = mu_t(X_t) + sigma_t(X_t) phi(X_t, U_t), with phi from `inner`.
/// The additive and random-coefficient families use mu_t = 0, sigma_t = 1.
struct DgpSpec {
  DgpFamily family = DgpFamily::additive_linear;
  DgpFamily inner = DgpFamily::additive_linear;
  RegressorLaw regressors;
  HeterogeneityLink link = HeterogeneityLink::period_average;
  double rho = 0.5;
  double sd_a = 0.5;
  AdditiveLinearParams additive;
  RandomCoefficientParams random_coefficient;
  Affine mu1{0.0, 0.0};
  Affine mu2{3.0, 0.0};
  Affine sigma1{1.0, 0.0};
  Affine sigma2{2.0, 0.0};

  /// Throws ConfigError for unsampleable settings (negative scales,
  /// stayer_prob outside [0, 1], a nested location-scale inner family).
  void validate() const;
};

[[nodiscard]] std::string to_string(DgpFamily family);
[[nodiscard]] DgpFamily parse_dgp_family(const std::string& text);
[[nodiscard]] std::string to_string(HeterogeneityLink link);
[[nodiscard]] HeterogeneityLink parse_heterogeneity_link(const std::string& text);

/// Reads `dgp.*` keys; missing keys keep their defaults.
[[nodiscard]] DgpSpec dgp_from_config(const KeyValues& kv);
/// Writes every `dgp.*` key so that dgp_from_config round-trips.
void dgp_to_config(const DgpSpec& spec, KeyValues& kv);

/// Unit i is simulated from its own counter-based substream, so any prefix
/// of a larger sample equals the smaller sample with the same seed.
[[nodiscard]] PanelDataset simulate(const DgpSpec& spec, std::size_t n, std::uint64_t seed);

enum class TruthKind { mean, quantile, time_averaged_mean, time_averaged_quantile };

[[nodiscard]] std::string to_string(TruthKind kind);

struct OracleOptions {
  std::size_t n_oracle = 1'000'000;
  std::uint64_t seed = 20240229;
  std::size_t groups = 20;        ///< subsample groups for the standard error
  std::size_t min_retained = 500;
};

struct OracleResult {
  double value = 0.0;
  double standard_error = 0.0;  ///< zero for closed-form values
  std::size_t n_oracle = 0;
  double stayer_bandwidth = 0.0;
  double quantile_bandwidth = 0.0;
  std::size_t retained = 0;
  bool closed_form = false;
};

/// Effect of x on the outcome for stayers at X1 = X2 = x: E[d/dx phi(x, U_t)
/// | X1 = X2 = x] for the mean kinds, and the same expectation given
/// phi(x, U_t) at its conditional tau-quantile for the quantile kinds.
/// Time-averaged kinds add the location-scale terms. Closed form where the
/// family allows it, otherwise a brute-force simulation that keeps units
/// with |X1 - x| <= h and |X2 - x| <= h, h = N^{-1/5} SD(X).
[[nodiscard]] OracleResult true_effect(const DgpSpec& spec, double x, TruthKind kind,
                                       double tau = 0.5, const OracleOptions& options = {});

/// sigma2(x) / sigma1(x) and mu2(x) - sigma(x) mu1(x); 1 and 0 without time effects.
[[nodiscard]] double true_sigma(const DgpSpec& spec, double x);
[[nodiscard]] double true_shift(const DgpSpec& spec, double x);

}  // namespace stayers
