// Weighted quantile regression by a primal-dual interior point method.
//
// For observation weights w_i >= 0, w_i * rho_tau(y_i - x_i'b) equals
// rho_tau(w_i y_i - w_i x_i'b), so the weighted problem is the unweighted
// one on rescaled rows. Its LP dual (in the form used by Koenker's
// Frisch-Newton solver) is
//
//   min  c'z   s.t.  A z = (1 - tau) A 1,   0 <= z <= 1,
//
// with A = X' and c = -y; the regression coefficients are the negated
// multipliers of the equality constraints.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "stayers/digest.hpp"
#include "stayers/error.hpp"
#include "stayers/regress.hpp"

namespace stayers {

namespace {

struct SolveResult {
  Eigen::VectorXd beta;
  int iterations = 0;
};

double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double step = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) step = std::min(step, -v[i] / dv[i]);
  }
  return step;
}

double loss_of(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
               double tau) {
  const Eigen::VectorXd r = y - X * beta;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) loss += r[i] >= 0.0 ? tau * r[i] : (tau - 1.0) * r[i];
  return loss;
}

// Moves an approximate minimizer onto the basic solution interpolating the
// K observations with the smallest absolute residuals, when that does not
// increase the loss.
Eigen::VectorXd refine_to_vertex(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& beta, double tau) {
  const Eigen::Index m = X.rows();
  const Eigen::Index k = X.cols();
  const Eigen::VectorXd resid = (y - X * beta).cwiseAbs();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return resid[a] < resid[b]; });

  Eigen::MatrixXd basis(k, k);   // orthonormalized accepted rows
  Eigen::MatrixXd rows(k, k);    // accepted rows as-is
  Eigen::VectorXd rhs(k);
  Eigen::Index accepted = 0;
  for (Eigen::Index idx : order) {
    if (accepted == k) break;
    Eigen::VectorXd v = X.row(idx).transpose();
    const double norm0 = v.norm();
    if (norm0 == 0.0) continue;
    for (Eigen::Index j = 0; j < accepted; ++j) v -= basis.row(j).dot(v) * basis.row(j).transpose();
    for (Eigen::Index j = 0; j < accepted; ++j) v -= basis.row(j).dot(v) * basis.row(j).transpose();
    const double norm = v.norm();
    if (norm <= 1e-8 * norm0) continue;
    basis.row(accepted) = (v / norm).transpose();
    rows.row(accepted) = X.row(idx);
    rhs[accepted] = y[idx];
    ++accepted;
  }
  if (accepted < k) return beta;
  const Eigen::VectorXd vertex = rows.colPivHouseholderQr().solve(rhs);
  if (!vertex.allFinite()) return beta;
  return loss_of(X, y, vertex, tau) <= loss_of(X, y, beta, tau) ? vertex : beta;
}

SolveResult solve_check_loss(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tau,
                             const QuantileSolverOptions& options) {
  const Eigen::Index m = X.rows();
  const Eigen::VectorXd c = -y;
  Eigen::VectorXd z = Eigen::VectorXd::Constant(m, 1.0 - tau);
  const Eigen::VectorXd b = X.transpose() * z;

  // Dual start: least-squares multipliers, then split the residual into the
  // two bound multipliers with a common positive offset.
  Eigen::VectorXd dual = X.colPivHouseholderQr().solve(c);
  Eigen::VectorXd rd = c - X * dual;
  const double offset = 1e-3 * rd.cwiseAbs().mean() + 1e-10 * (1.0 + c.cwiseAbs().maxCoeff());
  Eigen::VectorXd s = rd.cwiseMax(0.0).array() + offset;
  Eigen::VectorXd r = (-rd).cwiseMax(0.0).array() + offset;

  const double b_scale = 1.0 + b.norm();
  const double c_scale = 1.0 + c.norm();
  SolveResult result;
  bool converged = false;
  for (int it = 0; it < options.max_iterations; ++it) {
    result.iterations = it + 1;
    const Eigen::VectorXd w = (1.0 - z.array()).matrix();
    rd = c - X * dual - s + r;
    const Eigen::VectorXd rp = b - X.transpose() * z;
    const double gap = z.dot(s) + w.dot(r);
    const double primal = c.dot(z);
    if (gap <= options.tolerance * (1.0 + std::abs(primal)) && rp.norm() <= 1e-9 * b_scale &&
        rd.norm() <= 1e-9 * c_scale) {
      converged = true;
      break;
    }
    const Eigen::VectorXd dinv =
        (s.array() / z.array() + r.array() / w.array()).inverse().matrix();
    const Eigen::MatrixXd normal = X.transpose() * dinv.asDiagonal() * X;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
    if (ldlt.info() != Eigen::Success) break;

    auto direction = [&](const Eigen::VectorXd& q, Eigen::VectorXd& dz, Eigen::VectorXd& ddual) {
      ddual = ldlt.solve(rp + X.transpose() * dinv.cwiseProduct(q));
      dz = dinv.cwiseProduct(X * ddual - q);
    };

    // Predictor (affine scaling) step.
    Eigen::VectorXd dz;
    Eigen::VectorXd ddual;
    direction(rd + s - r, dz, ddual);
    Eigen::VectorXd ds = -s - s.cwiseProduct(dz).cwiseQuotient(z);
    Eigen::VectorXd dr = -r + r.cwiseProduct(dz).cwiseQuotient(w);
    double ap = std::min({1.0, max_step(z, dz), max_step(w, -dz)});
    double ad = std::min({1.0, max_step(s, ds), max_step(r, dr)});
    const double gap_aff = (z + ap * dz).dot(s + ad * ds) + (w - ap * dz).dot(r + ad * dr);
    const double sigma = std::pow(gap_aff / gap, 3.0);
    const double mu = sigma * gap / static_cast<double>(2 * m);

    // Corrector with the second-order terms of the predictor.
    const Eigen::VectorXd xi1 = (mu - z.array() * s.array() - dz.array() * ds.array()).matrix();
    const Eigen::VectorXd xi2 = (mu - w.array() * r.array() + dz.array() * dr.array()).matrix();
    direction(rd - xi1.cwiseQuotient(z) + xi2.cwiseQuotient(w), dz, ddual);
    ds = (xi1 - s.cwiseProduct(dz)).cwiseQuotient(z);
    dr = (xi2 + r.cwiseProduct(dz)).cwiseQuotient(w);
    ap = std::min(1.0, 0.99995 * std::min(max_step(z, dz), max_step(w, -dz)));
    ad = std::min(1.0, 0.99995 * std::min(max_step(s, ds), max_step(r, dr)));
    if (!(ap > 0.0) || !(ad > 0.0) || !dz.allFinite() || !ddual.allFinite()) break;

    z += ap * dz;
    dual += ad * ddual;
    s += ad * ds;
    r += ad * dr;
  }

  Eigen::VectorXd beta = -dual;
  if (!beta.allFinite()) throw NumericalError("quantile regression produced non-finite coefficients");
  if (!converged) {
    // Certified optimality gap from the current primal-feasible z: the
    // check loss is bounded below by -c'z - (1 - tau) * sum(y).
    const double upper = loss_of(X, y, beta, tau);
    const double lower = -c.dot(z) - (1.0 - tau) * y.sum();
    if (upper - lower > 1e-7 * (1.0 + std::abs(upper))) {
      std::ostringstream msg;
      msg << "quantile regression did not converge (tau=" << tau << ", iterations="
          << result.iterations << ", gap=" << upper - lower << ")";
      throw NumericalError(msg.str());
    }
  }
  result.beta = refine_to_vertex(X, y, beta, tau);
  return result;
}

}  // namespace

QuantileFit qr_fit(const DesignMatrix& design, std::span<const double> y,
                   std::span<const double> taus, std::span<const double> w, int period,
                   const QuantileSolverOptions& options) {
  const auto n = static_cast<std::size_t>(design.X.rows());
  if (y.size() != n || w.size() != n) {
    throw std::invalid_argument("design, outcome and weight lengths disagree");
  }
  if (taus.empty()) throw std::invalid_argument("empty tau grid");
  for (double tau : taus) {
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must lie in (0, 1)");
  }
  double total = 0.0;
  for (double wi : w) {
    if (!std::isfinite(wi)) throw DataError("non-finite weight");
    if (wi < 0.0) throw std::invalid_argument("negative weight");
    total += wi;
  }
  if (!(total > 0.0)) throw std::invalid_argument("all weights are zero");
  if (!design.X.allFinite()) throw DataError("non-finite design entry");

  std::vector<Eigen::Index> kept;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(y[i])) throw DataError("non-finite outcome");
    if (w[i] > 0.0) kept.push_back(static_cast<Eigen::Index>(i));
  }
  const auto m = static_cast<Eigen::Index>(kept.size());
  const Eigen::Index k = design.X.cols();
  Eigen::MatrixXd X(m, k);
  Eigen::VectorXd yy(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    const double wi = w[static_cast<std::size_t>(kept[static_cast<std::size_t>(r)])];
    X.row(r) = wi * design.X.row(kept[static_cast<std::size_t>(r)]);
    yy[r] = wi * y[static_cast<std::size_t>(kept[static_cast<std::size_t>(r)])];
  }

  // Column and outcome scaling for conditioning; undone on the coefficients.
  Eigen::VectorXd col_scale(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double norm = X.col(j).norm();
    col_scale[j] = norm > 0.0 ? norm / std::sqrt(static_cast<double>(m)) : 1.0;
    X.col(j) /= col_scale[j];
  }
  const double y_scale = yy.size() > 0 && yy.cwiseAbs().maxCoeff() > 0.0 ? yy.cwiseAbs().maxCoeff() : 1.0;
  yy /= y_scale;

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
  cod.setThreshold(1e-10);
  cod.compute(X);
  if (m < k || cod.rank() < k) {
    throw NumericalError("degenerate design for quantile regression (rank " +
                         std::to_string(cod.rank()) + " < " + std::to_string(k) + ")");
  }

  QuantileFit fit;
  fit.period = period;
  fit.spec_digest = design.spec_digest;
  fit.weights_digest = digest_of(w);
  for (double tau : taus) {
    SolveResult solved = solve_check_loss(X, yy, tau, options);
    fit.taus.push_back(tau);
    fit.betas.push_back(solved.beta.cwiseQuotient(col_scale) * y_scale);
    fit.iterations.push_back(solved.iterations);
  }
  return fit;
}

}  // namespace stayers
