#include "stayers/regress.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "stayers/digest.hpp"
#include "stayers/error.hpp"

namespace stayers {

namespace {

void check_inputs(const DesignMatrix& design, std::span<const double> y,
                  std::span<const double> w) {
  const auto n = static_cast<std::size_t>(design.X.rows());
  if (y.size() != n || w.size() != n) {
    throw std::invalid_argument("design, outcome and weight lengths disagree");
  }
  if (n == 0 || design.X.cols() == 0) throw std::invalid_argument("empty design");
  double total = 0.0;
  for (double wi : w) {
    if (!std::isfinite(wi)) throw DataError("non-finite weight");
    if (wi < 0.0) throw std::invalid_argument("negative weight");
    total += wi;
  }
  if (!(total > 0.0)) throw std::invalid_argument("all weights are zero");
  for (double yi : y) {
    if (!std::isfinite(yi)) throw DataError("non-finite outcome");
  }
  if (!design.X.allFinite()) throw DataError("non-finite design entry");
}

}  // namespace

bool is_variance(FitTarget target) {
  return target == FitTarget::variance_period1 || target == FitTarget::variance_period2;
}

std::string to_string(FitTarget target) {
  switch (target) {
    case FitTarget::mean_period1:
      return "mean-period-1";
    case FitTarget::mean_period2:
      return "mean-period-2";
    case FitTarget::variance_period1:
      return "variance-period-1";
    case FitTarget::variance_period2:
      return "variance-period-2";
  }
  return "?";
}

std::size_t QuantileFit::index_of(double tau) const {
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (std::abs(taus[i] - tau) < 1e-12) return i;
  }
  throw std::invalid_argument("tau " + std::to_string(tau) + " not in the fitted grid");
}

LinearFit wls_fit(const DesignMatrix& design, std::span<const double> y,
                  std::span<const double> w, FitTarget target) {
  check_inputs(design, y, w);
  const Eigen::Index n = design.X.rows();
  Eigen::VectorXd root_w(n);
  Eigen::VectorXd rhs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    root_w[i] = std::sqrt(w[static_cast<std::size_t>(i)]);
    rhs[i] = root_w[i] * y[static_cast<std::size_t>(i)];
  }
  const Eigen::MatrixXd scaled = root_w.asDiagonal() * design.X;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
  cod.setThreshold(1e-10);
  cod.compute(scaled);

  LinearFit fit;
  fit.beta = cod.solve(rhs);
  if (!fit.beta.allFinite()) throw NumericalError("least-squares solution is not finite");
  fit.rank = cod.rank();
  fit.spec_digest = design.spec_digest;
  fit.weights_digest = digest_of(w);
  fit.target = target;
  return fit;
}

LinearFit variance_fit(const DesignMatrix& design, std::span<const double> y,
                       const LinearFit& mean_fit, std::span<const double> w) {
  if (mean_fit.spec_digest != design.spec_digest) {
    throw std::invalid_argument("mean fit was produced with a different basis");
  }
  if (is_variance(mean_fit.target)) throw std::invalid_argument("variance_fit needs a mean fit");
  check_inputs(design, y, w);
  const Eigen::VectorXd fitted = design.X * mean_fit.beta;
  std::vector<double> squared(y.size());
  double sw = 0.0;
  double swy = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - fitted[static_cast<Eigen::Index>(i)];
    squared[i] = r * r;
    sw += w[i];
    swy += w[i] * y[i];
  }
  const double ybar = swy / sw;
  double var = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) var += w[i] * (y[i] - ybar) * (y[i] - ybar);
  var /= sw;

  const FitTarget target = mean_fit.target == FitTarget::mean_period1
                               ? FitTarget::variance_period1
                               : FitTarget::variance_period2;
  LinearFit fit = wls_fit(design, squared, w, target);
  fit.floor = 1e-8 * var;
  return fit;
}

Prediction predict(const LinearFit& fit, const BasisEval& basis, double floor) {
  if (fit.spec_digest != basis.spec_digest || fit.beta.size() != basis.values.size()) {
    throw std::invalid_argument("fit and basis evaluation come from different specs");
  }
  Prediction p;
  p.value = fit.beta.dot(basis.values);
  p.d_x1 = fit.beta.dot(basis.d_x1);
  p.d_x2 = fit.beta.dot(basis.d_x2);
  if (is_variance(fit.target) && p.value < floor) {
    p.value = floor;
    p.floored = true;
  }
  return p;
}

Prediction predict(const LinearFit& fit, const BasisEval& basis) {
  return predict(fit, basis, fit.floor);
}

Prediction predict(const QuantileFit& fit, std::size_t tau_index, const BasisEval& basis) {
  if (fit.spec_digest != basis.spec_digest) {
    throw std::invalid_argument("fit and basis evaluation come from different specs");
  }
  const Eigen::VectorXd& beta = fit.betas.at(tau_index);
  return {beta.dot(basis.values), beta.dot(basis.d_x1), beta.dot(basis.d_x2), false};
}

double check_loss(const Eigen::MatrixXd& X, std::span<const double> y, std::span<const double> w,
                  const Eigen::VectorXd& beta, double tau) {
  const Eigen::VectorXd fitted = X * beta;
  double loss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - fitted[static_cast<Eigen::Index>(i)];
    loss += w[i] * (r >= 0.0 ? tau * r : (tau - 1.0) * r);
  }
  return loss;
}

bool quantile_crossing(const QuantileFit& fit, const BasisEval& basis) {
  for (std::size_t k = 1; k < fit.taus.size(); ++k) {
    if (predict(fit, k, basis).value < predict(fit, k - 1, basis).value) return true;
  }
  return false;
}

void to_json(nlohmann::json& j, const LinearFit& fit) {
  j = {{"target", to_string(fit.target)},
       {"beta", std::vector<double>(fit.beta.data(), fit.beta.data() + fit.beta.size())},
       {"rank", fit.rank},
       {"floor", fit.floor},
       {"spec_digest", fit.spec_digest},
       {"weights_digest", fit.weights_digest}};
}

void to_json(nlohmann::json& j, const QuantileFit& fit) {
  nlohmann::json betas = nlohmann::json::array();
  for (const auto& b : fit.betas) betas.push_back(std::vector<double>(b.data(), b.data() + b.size()));
  j = {{"period", fit.period},
       {"taus", fit.taus},
       {"betas", betas},
       {"iterations", fit.iterations},
       {"spec_digest", fit.spec_digest},
       {"weights_digest", fit.weights_digest}};
}

namespace {
Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}
}  // namespace

LinearFit linear_fit_from_json(const nlohmann::json& j) {
  LinearFit fit;
  const auto target = j.at("target").get<std::string>();
  for (FitTarget t : {FitTarget::mean_period1, FitTarget::mean_period2, FitTarget::variance_period1,
                      FitTarget::variance_period2}) {
    if (to_string(t) == target) fit.target = t;
  }
  fit.beta = to_vector(j.at("beta").get<std::vector<double>>());
  fit.rank = j.at("rank").get<Eigen::Index>();
  fit.floor = j.at("floor").get<double>();
  fit.spec_digest = j.at("spec_digest").get<std::uint64_t>();
  fit.weights_digest = j.at("weights_digest").get<std::uint64_t>();
  return fit;
}

QuantileFit quantile_fit_from_json(const nlohmann::json& j) {
  QuantileFit fit;
  fit.period = j.at("period").get<int>();
  fit.taus = j.at("taus").get<std::vector<double>>();
  for (const auto& b : j.at("betas")) fit.betas.push_back(to_vector(b.get<std::vector<double>>()));
  fit.iterations = j.at("iterations").get<std::vector<int>>();
  fit.spec_digest = j.at("spec_digest").get<std::uint64_t>();
  fit.weights_digest = j.at("weights_digest").get<std::uint64_t>();
  return fit;
}

}  // namespace stayers
