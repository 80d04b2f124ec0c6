#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "stayers/basis.hpp"

namespace stayers {

enum class FitTarget { mean_period1, mean_period2, variance_period1, variance_period2 };

[[nodiscard]] bool is_variance(FitTarget target);
[[nodiscard]] std::string to_string(FitTarget target);

/// Coefficients of a weighted series least-squares fit.
struct LinearFit {
  Eigen::VectorXd beta;
  std::uint64_t spec_digest = 0;
  std::uint64_t weights_digest = 0;
  FitTarget target = FitTarget::mean_period1;
  Eigen::Index rank = 0;
  /// Prediction floor for variance targets: 1e-8 * weighted variance of y.
  double floor = 0.0;
};

/// Check-loss fits, one coefficient vector per quantile index.
struct QuantileFit {
  std::vector<double> taus;
  std::vector<Eigen::VectorXd> betas;
  int period = 1;
  std::uint64_t spec_digest = 0;
  std::uint64_t weights_digest = 0;
  std::vector<int> iterations;

  /// Position of `tau` in the grid; throws std::invalid_argument if absent.
  [[nodiscard]] std::size_t index_of(double tau) const;
};

struct Prediction {
  double value = 0.0;
  double d_x1 = 0.0;
  double d_x2 = 0.0;
  bool floored = false;
};

/// Weighted least squares, minimum-norm on rank deficiency (complete
/// orthogonal decomposition, relative rank tolerance 1e-10).
/// Throws std::invalid_argument on bad dimensions, negative or all-zero
/// weights and DataError on non-finite inputs.
[[nodiscard]] LinearFit wls_fit(const DesignMatrix& design, std::span<const double> y,
                                std::span<const double> w,
                                FitTarget target = FitTarget::mean_period1);

/// Series conditional-variance fit: weighted regression of the squared
/// in-sample residuals of `mean_fit` on the same design.
[[nodiscard]] LinearFit variance_fit(const DesignMatrix& design, std::span<const double> y,
                                     const LinearFit& mean_fit, std::span<const double> w);

/// Plug-in value and analytic derivatives. For variance targets the value
/// is max(raw, floor) and `floored` records whether the floor bound; the
/// derivatives are never floored. Throws std::invalid_argument on a basis
/// mismatch.
[[nodiscard]] Prediction predict(const LinearFit& fit, const BasisEval& basis, double floor);
[[nodiscard]] Prediction predict(const LinearFit& fit, const BasisEval& basis);

[[nodiscard]] Prediction predict(const QuantileFit& fit, std::size_t tau_index,
                                 const BasisEval& basis);

struct QuantileSolverOptions {
  int max_iterations = 200;
  double tolerance = 1e-13;  ///< relative duality gap at termination
};

/// Weighted check-loss minimization for every tau, by a primal-dual
/// (Mehrotra predictor-corrector) interior point method on the dual LP,
/// finished with a vertex refinement. Throws NumericalError on
/// non-convergence or a rank-deficient design.
[[nodiscard]] QuantileFit qr_fit(const DesignMatrix& design, std::span<const double> y,
                                 std::span<const double> taus, std::span<const double> w,
                                 int period = 1, const QuantileSolverOptions& options = {});

/// sum_i w_i * rho_tau(y_i - x_i' beta).
[[nodiscard]] double check_loss(const Eigen::MatrixXd& X, std::span<const double> y,
                                std::span<const double> w, const Eigen::VectorXd& beta,
                                double tau);

/// True when the fitted quantiles at this point decrease somewhere along the
/// tau grid (diagnostic only; no repair is applied).
[[nodiscard]] bool quantile_crossing(const QuantileFit& fit, const BasisEval& basis);

void to_json(nlohmann::json& j, const LinearFit& fit);
void to_json(nlohmann::json& j, const QuantileFit& fit);
[[nodiscard]] LinearFit linear_fit_from_json(const nlohmann::json& j);
[[nodiscard]] QuantileFit quantile_fit_from_json(const nlohmann::json& j);

}  // namespace stayers
