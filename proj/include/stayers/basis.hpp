#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "stayers/panel.hpp"

namespace stayers {

enum class BasisKind { intercept_only, raw_polynomial, orthogonal_polynomial, cubic_bspline };

/// How the two per-period arguments are combined.
///  - additive:   [1, u(x1) without constant, u(x2) without constant]
///  - tensor:     u(x1) (x) u(x2); contains the constant, intercept flag unused
///  - univariate: [1, u(x1) without constant]; x2 is ignored (cross-section fits)
enum class BasisStructure { additive, tensor, univariate };

struct BasisOptions {
  BasisKind kind = BasisKind::cubic_bspline;
  BasisStructure structure = BasisStructure::additive;
  int degree = 2;  ///< polynomial degree; B-splines are always cubic
  bool intercept = true;
};

/// Values and partial derivatives of P^K at one point.
struct BasisEval {
  Eigen::VectorXd values;
  Eigen::VectorXd d_x1;
  Eigen::VectorXd d_x2;
  bool clamped = false;  ///< an argument was moved onto the knot span
  std::uint64_t spec_digest = 0;
};

/// Univariate block u(x) with its derivative; the first entry is the
/// constant direction (1 for polynomials, the first B-spline otherwise).
struct UnivariateEval {
  Eigen::VectorXd values;
  Eigen::VectorXd derivs;
  bool clamped = false;
};

/// Immutable series basis. Built once against a reference sample of x
/// values (knot placement, orthogonalization) and then reused, including
/// by every bootstrap draw.
class BasisSpec {
 public:
  /// Throws DataError for a degenerate reference sample and ConfigError
  /// when the degree exceeds the sample's rank.
  static BasisSpec make(const BasisOptions& options, std::span<const double> reference);
  static BasisSpec intercept_only();
  /// B-spline with explicit breakpoints (strictly increasing, >= 2 values).
  static BasisSpec bspline(std::vector<double> breakpoints, BasisStructure structure,
                           bool intercept = true);

  [[nodiscard]] BasisKind kind() const { return kind_; }
  [[nodiscard]] BasisStructure structure() const { return structure_; }
  [[nodiscard]] int degree() const { return degree_; }
  [[nodiscard]] bool intercept() const { return intercept_; }
  [[nodiscard]] const std::vector<double>& breakpoints() const { return breakpoints_; }
  [[nodiscard]] const std::vector<double>& knot_vector() const { return knots_; }
  [[nodiscard]] const Eigen::MatrixXd& orthogonalization() const { return orth_; }

  /// Number of columns K.
  [[nodiscard]] std::size_t size() const;
  /// Size of one univariate block including its constant direction.
  [[nodiscard]] std::size_t block_size() const;
  [[nodiscard]] std::uint64_t digest() const { return digest_; }

  [[nodiscard]] UnivariateEval univariate(double x) const;
  /// Throws std::invalid_argument on non-finite input.
  [[nodiscard]] BasisEval eval(double x1, double x2) const;

  [[nodiscard]] nlohmann::json to_json() const;
  static BasisSpec from_json(const nlohmann::json& j);

 private:
  BasisSpec() = default;
  void finalize();

  BasisKind kind_ = BasisKind::intercept_only;
  BasisStructure structure_ = BasisStructure::additive;
  int degree_ = 0;
  bool intercept_ = true;
  std::vector<double> breakpoints_;
  std::vector<double> knots_;
  double center_ = 0.0;
  double scale_ = 1.0;
  Eigen::MatrixXd orth_;  ///< rows map scaled monomials to orthonormal polynomials
  std::uint64_t digest_ = 0;
};

/// Convenience wrapper matching the free-function form.
[[nodiscard]] BasisSpec make_spec(const BasisOptions& options, std::span<const double> reference);

/// Design matrix tagged with the basis that produced it.
struct DesignMatrix {
  Eigen::MatrixXd X;
  std::uint64_t spec_digest = 0;
};

/// Row i is eval(spec, x1[i], x2[i]).values.
[[nodiscard]] DesignMatrix design_matrix(const BasisSpec& spec, const PanelDataset& data);
[[nodiscard]] DesignMatrix design_matrix(const BasisSpec& spec, std::span<const double> x1,
                                         std::span<const double> x2);

[[nodiscard]] std::string to_string(BasisKind kind);
[[nodiscard]] std::string to_string(BasisStructure structure);
[[nodiscard]] BasisKind parse_basis_kind(const std::string& text);
[[nodiscard]] BasisStructure parse_basis_structure(const std::string& text);

}  // namespace stayers
