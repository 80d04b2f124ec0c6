#pragma once

// Test-only oracles for weighted check-loss minimization, independent of the
// library's interior point solver:
//  - a dense tableau simplex (Bland's rule, long double) on the primal LP
//      min sum_i w_i (tau u_i + (1 - tau) v_i)
//      s.t. X (b+ - b-) + u - v = y,  b+, b-, u, v >= 0
//  - brute-force vertex enumeration over all K-subsets of observations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace stayers::oracle {

inline double oracle_check_loss(const Eigen::MatrixXd& X, const std::vector<double>& y,
                                const std::vector<double>& w, const Eigen::VectorXd& beta,
                                double tau) {
  long double loss = 0.0L;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const long double r = y[static_cast<std::size_t>(i)] - X.row(i).dot(beta);
    loss += w[static_cast<std::size_t>(i)] * (r >= 0 ? tau * r : (tau - 1.0L) * r);
  }
  return static_cast<double>(loss);
}

struct LpSolution {
  Eigen::VectorXd beta;
  double loss = 0.0;
  int pivots = 0;
};

inline LpSolution simplex_check_loss(const Eigen::MatrixXd& X, const std::vector<double>& y,
                                     const std::vector<double>& w, double tau) {
  using Real = long double;
  const auto n = static_cast<std::size_t>(X.rows());
  const auto k = static_cast<std::size_t>(X.cols());
  const std::size_t vars = 2 * k + 2 * n;
  std::vector<std::vector<Real>> t(n, std::vector<Real>(vars + 1, 0.0L));
  std::vector<Real> cost(vars, 0.0L);
  std::vector<std::size_t> basis(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Real sign = y[i] >= 0.0 ? 1.0L : -1.0L;
    for (std::size_t j = 0; j < k; ++j) {
      const Real xij = X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      t[i][j] = sign * xij;
      t[i][k + j] = -sign * xij;
    }
    t[i][2 * k + i] = sign;
    t[i][2 * k + n + i] = -sign;
    t[i][vars] = sign * y[i];
    cost[2 * k + i] = w[i] * tau;
    cost[2 * k + n + i] = w[i] * (1.0 - tau);
    basis[i] = y[i] >= 0.0 ? 2 * k + i : 2 * k + n + i;
  }
  const Real eps = 1e-15L;
  LpSolution out;
  for (int guard = 0; guard < 100000; ++guard) {
    std::size_t entering = vars;
    for (std::size_t j = 0; j < vars && entering == vars; ++j) {
      Real reduced = cost[j];
      for (std::size_t i = 0; i < n; ++i) reduced -= cost[basis[i]] * t[i][j];
      if (reduced < -1e-13L) entering = j;
    }
    if (entering == vars) break;
    std::size_t leaving = n;
    Real best = std::numeric_limits<Real>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (t[i][entering] > eps) {
        const Real ratio = t[i][vars] / t[i][entering];
        if (ratio < best - 1e-18L || (std::fabs(ratio - best) <= 1e-18L && leaving < n &&
                                      basis[i] < basis[leaving])) {
          best = ratio;
          leaving = i;
        }
      }
    }
    if (leaving == n) throw std::runtime_error("LP oracle: unbounded");
    const Real pivot = t[leaving][entering];
    for (auto& v : t[leaving]) v /= pivot;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == leaving) continue;
      const Real factor = t[i][entering];
      if (factor == 0.0L) continue;
      for (std::size_t j = 0; j <= vars; ++j) t[i][j] -= factor * t[leaving][j];
    }
    basis[leaving] = entering;
    ++out.pivots;
  }
  out.beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = basis[i];
    if (j < k) out.beta[static_cast<Eigen::Index>(j)] += static_cast<double>(t[i][vars]);
    if (j >= k && j < 2 * k) out.beta[static_cast<Eigen::Index>(j - k)] -= static_cast<double>(t[i][vars]);
  }
  out.loss = oracle_check_loss(X, y, w, out.beta, tau);
  return out;
}

/// Minimum over all basic solutions interpolating K observations. Exact for
/// full-column-rank designs (an optimal vertex always exists).
inline double vertex_enumeration_loss(const Eigen::MatrixXd& X, const std::vector<double>& y,
                                      const std::vector<double>& w, double tau) {
  const auto n = static_cast<std::size_t>(X.rows());
  const auto k = static_cast<std::size_t>(X.cols());
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> pick(k);
  std::function<void(std::size_t, std::size_t)> recurse = [&](std::size_t depth, std::size_t from) {
    if (depth == k) {
      Eigen::MatrixXd a(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
      Eigen::VectorXd rhs(static_cast<Eigen::Index>(k));
      for (std::size_t r = 0; r < k; ++r) {
        a.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(pick[r]));
        rhs[static_cast<Eigen::Index>(r)] = y[pick[r]];
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
      if (!lu.isInvertible()) return;
      best = std::min(best, oracle_check_loss(X, y, w, lu.solve(rhs), tau));
      return;
    }
    for (std::size_t i = from; i < n; ++i) {
      pick[depth] = i;
      recurse(depth + 1, i + 1);
    }
  };
  recurse(0, 0);
  return best;
}

}  // namespace stayers::oracle
