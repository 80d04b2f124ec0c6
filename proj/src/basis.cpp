#include "stayers/basis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "stayers/digest.hpp"
#include "stayers/error.hpp"

namespace stayers {

namespace {

constexpr int kSplineOrder = 4;  // cubic

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size();
  return m % 2 == 1 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

// Cox-de Boor recursion for all order-4 B-splines on `knots`, with first
// derivatives. `x` must lie in [knots.front(), knots.back()].
void bspline_block(const std::vector<double>& knots, double x, Eigen::VectorXd& values,
                   Eigen::VectorXd& derivs) {
  const std::size_t nk = knots.size();
  const std::size_t nb = nk - kSplineOrder;
  // Order-1 indicators; the right end of the span belongs to the last
  // non-degenerate interval.
  std::vector<double> n(nk - 1, 0.0);
  std::size_t span = nk - 1;
  for (std::size_t i = 0; i + 1 < nk; ++i) {
    if (knots[i] <= x && x < knots[i + 1]) {
      span = i;
      break;
    }
  }
  if (span == nk - 1) {
    for (std::size_t i = nk - 1; i-- > 0;) {
      if (knots[i] < knots[i + 1]) {
        span = i;
        break;
      }
    }
  }
  n[span] = 1.0;

  auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
  std::vector<double> lower;  // order-3 values, kept for derivatives
  for (int k = 2; k <= kSplineOrder; ++k) {
    if (k == kSplineOrder) lower = n;
    const std::size_t count = nk - static_cast<std::size_t>(k);
    std::vector<double> next(count, 0.0);
    for (std::size_t i = 0; i < count; ++i) {
      next[i] = ratio(x - knots[i], knots[i + k - 1] - knots[i]) * n[i] +
                ratio(knots[i + k] - x, knots[i + k] - knots[i + 1]) * n[i + 1];
    }
    n = std::move(next);
  }
  values.resize(static_cast<Eigen::Index>(nb));
  derivs.resize(static_cast<Eigen::Index>(nb));
  for (std::size_t i = 0; i < nb; ++i) {
    values[static_cast<Eigen::Index>(i)] = n[i];
    derivs[static_cast<Eigen::Index>(i)] =
        (kSplineOrder - 1) * (ratio(lower[i], knots[i + kSplineOrder - 1] - knots[i]) -
                              ratio(lower[i + 1], knots[i + kSplineOrder] - knots[i + 1]));
  }
}

}  // namespace

BasisSpec BasisSpec::intercept_only() {
  BasisSpec spec;
  spec.kind_ = BasisKind::intercept_only;
  spec.structure_ = BasisStructure::univariate;
  spec.finalize();
  return spec;
}

BasisSpec BasisSpec::bspline(std::vector<double> breakpoints, BasisStructure structure,
                             bool intercept) {
  if (breakpoints.size() < 2) throw ConfigError("B-spline needs at least 2 breakpoints");
  for (std::size_t i = 0; i < breakpoints.size(); ++i) {
    if (!std::isfinite(breakpoints[i])) throw ConfigError("non-finite B-spline breakpoint");
    if (i > 0 && !(breakpoints[i] > breakpoints[i - 1])) {
      throw DataError("B-spline breakpoints must be strictly increasing");
    }
  }
  BasisSpec spec;
  spec.kind_ = BasisKind::cubic_bspline;
  spec.structure_ = structure;
  spec.degree_ = 3;
  spec.intercept_ = intercept;
  spec.breakpoints_ = std::move(breakpoints);
  spec.knots_.assign(kSplineOrder, spec.breakpoints_.front());
  spec.knots_.insert(spec.knots_.end(), spec.breakpoints_.begin() + 1, spec.breakpoints_.end() - 1);
  spec.knots_.insert(spec.knots_.end(), kSplineOrder, spec.breakpoints_.back());
  spec.finalize();
  return spec;
}

BasisSpec BasisSpec::make(const BasisOptions& options, std::span<const double> reference) {
  if (options.kind == BasisKind::intercept_only) return intercept_only();
  if (reference.empty()) throw DataError("empty reference sample");
  for (double v : reference) {
    if (!std::isfinite(v)) throw DataError("non-finite value in reference sample");
  }
  const auto [lo_it, hi_it] = std::minmax_element(reference.begin(), reference.end());
  if (!(*hi_it > *lo_it)) throw DataError("degenerate reference sample: all values equal");

  if (options.kind == BasisKind::cubic_bspline) {
    const double mid = median_of({reference.begin(), reference.end()});
    if (!(mid > *lo_it && mid < *hi_it)) {
      throw DataError("degenerate knot placement: median coincides with a boundary");
    }
    return bspline({*lo_it, mid, *hi_it}, options.structure, options.intercept);
  }

  if (options.degree < 1) throw ConfigError("polynomial degree must be >= 1");
  BasisSpec spec;
  spec.kind_ = options.kind;
  spec.structure_ = options.structure;
  spec.degree_ = options.degree;
  spec.intercept_ = options.intercept;
  const auto cols = static_cast<Eigen::Index>(options.degree + 1);

  if (options.kind == BasisKind::raw_polynomial) {
    spec.orth_ = Eigen::MatrixXd::Identity(cols, cols);
    spec.finalize();
    return spec;
  }

  // Orthonormal w.r.t. the empirical measure of the reference sample:
  // QR of the Vandermonde block in standardized z = (x - center) / scale.
  const auto m = static_cast<Eigen::Index>(reference.size());
  double mean = 0.0;
  for (double v : reference) mean += v;
  mean /= static_cast<double>(m);
  double ss = 0.0;
  for (double v : reference) ss += (v - mean) * (v - mean);
  spec.center_ = mean;
  spec.scale_ = std::sqrt(ss / static_cast<double>(m));

  Eigen::MatrixXd vander(m, cols);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double z = (reference[static_cast<std::size_t>(i)] - spec.center_) / spec.scale_;
    double p = 1.0;
    for (Eigen::Index j = 0; j < cols; ++j) {
      vander(i, j) = p;
      p *= z;
    }
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(vander);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
  const double root_m = std::sqrt(static_cast<double>(m));
  for (Eigen::Index j = 0; j < cols; ++j) {
    if (std::abs(r(j, j)) < 1e-9 * root_m) {
      throw ConfigError("polynomial degree " + std::to_string(options.degree) +
                        " exceeds the rank supported by the reference sample");
    }
  }
  const Eigen::MatrixXd r_inv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(cols, cols));
  Eigen::VectorXd signs(cols);
  for (Eigen::Index j = 0; j < cols; ++j) signs[j] = r(j, j) > 0.0 ? 1.0 : -1.0;
  spec.orth_ = root_m * signs.asDiagonal() * r_inv.transpose();
  spec.finalize();
  return spec;
}

BasisSpec make_spec(const BasisOptions& options, std::span<const double> reference) {
  return BasisSpec::make(options, reference);
}

void BasisSpec::finalize() { digest_ = Digest{}.add(to_json().dump()).value(); }

std::size_t BasisSpec::block_size() const {
  switch (kind_) {
    case BasisKind::intercept_only:
      return 1;
    case BasisKind::cubic_bspline:
      return knots_.size() - kSplineOrder;
    default:
      return static_cast<std::size_t>(degree_) + 1;
  }
}

std::size_t BasisSpec::size() const {
  if (kind_ == BasisKind::intercept_only) return 1;
  const std::size_t b = block_size();
  const std::size_t lead = intercept_ ? 1 : 0;
  switch (structure_) {
    case BasisStructure::additive:
      return lead + 2 * (b - 1);
    case BasisStructure::tensor:
      return b * b;
    case BasisStructure::univariate:
      return lead + (b - 1);
  }
  return 0;
}

UnivariateEval BasisSpec::univariate(double x) const {
  if (!std::isfinite(x)) throw std::invalid_argument("non-finite basis argument");
  UnivariateEval out;
  switch (kind_) {
    case BasisKind::intercept_only:
      out.values = Eigen::VectorXd::Ones(1);
      out.derivs = Eigen::VectorXd::Zero(1);
      break;
    case BasisKind::cubic_bspline: {
      double at = x;
      if (at < breakpoints_.front()) {
        at = breakpoints_.front();
        out.clamped = true;
      } else if (at > breakpoints_.back()) {
        at = breakpoints_.back();
        out.clamped = true;
      }
      bspline_block(knots_, at, out.values, out.derivs);
      break;
    }
    default: {
      const auto cols = static_cast<Eigen::Index>(degree_ + 1);
      const double z = (x - center_) / scale_;
      Eigen::VectorXd mono(cols);
      Eigen::VectorXd dmono(cols);
      double p = 1.0;
      for (Eigen::Index j = 0; j < cols; ++j) {
        mono[j] = p;
        dmono[j] = j == 0 ? 0.0 : static_cast<double>(j) * mono[j - 1] / scale_;
        p *= z;
      }
      out.values = orth_ * mono;
      out.derivs = orth_ * dmono;
      break;
    }
  }
  return out;
}

BasisEval BasisSpec::eval(double x1, double x2) const {
  if (!std::isfinite(x1) || !std::isfinite(x2)) {
    throw std::invalid_argument("non-finite basis argument");
  }
  BasisEval out;
  out.spec_digest = digest_;
  const auto k = static_cast<Eigen::Index>(size());
  out.values = Eigen::VectorXd::Zero(k);
  out.d_x1 = Eigen::VectorXd::Zero(k);
  out.d_x2 = Eigen::VectorXd::Zero(k);
  if (kind_ == BasisKind::intercept_only) {
    out.values[0] = 1.0;
    return out;
  }
  const UnivariateEval u1 = univariate(x1);
  const auto b = static_cast<Eigen::Index>(block_size());
  Eigen::Index col = 0;
  switch (structure_) {
    case BasisStructure::tensor: {
      const UnivariateEval u2 = univariate(x2);
      out.clamped = u1.clamped || u2.clamped;
      for (Eigen::Index a = 0; a < b; ++a) {
        for (Eigen::Index c = 0; c < b; ++c, ++col) {
          out.values[col] = u1.values[a] * u2.values[c];
          out.d_x1[col] = u1.derivs[a] * u2.values[c];
          out.d_x2[col] = u1.values[a] * u2.derivs[c];
        }
      }
      break;
    }
    case BasisStructure::additive: {
      const UnivariateEval u2 = univariate(x2);
      out.clamped = u1.clamped || u2.clamped;
      if (intercept_) out.values[col++] = 1.0;
      out.values.segment(col, b - 1) = u1.values.tail(b - 1);
      out.d_x1.segment(col, b - 1) = u1.derivs.tail(b - 1);
      col += b - 1;
      out.values.segment(col, b - 1) = u2.values.tail(b - 1);
      out.d_x2.segment(col, b - 1) = u2.derivs.tail(b - 1);
      break;
    }
    case BasisStructure::univariate: {
      out.clamped = u1.clamped;
      if (intercept_) out.values[col++] = 1.0;
      out.values.segment(col, b - 1) = u1.values.tail(b - 1);
      out.d_x1.segment(col, b - 1) = u1.derivs.tail(b - 1);
      break;
    }
  }
  return out;
}

nlohmann::json BasisSpec::to_json() const {
  nlohmann::json orth = nlohmann::json::array();
  for (Eigen::Index i = 0; i < orth_.rows(); ++i) {
    std::vector<double> row;
    for (Eigen::Index j = 0; j < orth_.cols(); ++j) row.push_back(orth_(i, j));
    orth.push_back(row);
  }
  return {{"kind", to_string(kind_)},
          {"structure", to_string(structure_)},
          {"degree", degree_},
          {"intercept", intercept_},
          {"breakpoints", breakpoints_},
          {"knot_vector", knots_},
          {"center", center_},
          {"scale", scale_},
          {"orthogonalization", orth}};
}

BasisSpec BasisSpec::from_json(const nlohmann::json& j) {
  BasisSpec spec;
  spec.kind_ = parse_basis_kind(j.at("kind").get<std::string>());
  spec.structure_ = parse_basis_structure(j.at("structure").get<std::string>());
  spec.degree_ = j.at("degree").get<int>();
  spec.intercept_ = j.at("intercept").get<bool>();
  spec.breakpoints_ = j.at("breakpoints").get<std::vector<double>>();
  spec.knots_ = j.at("knot_vector").get<std::vector<double>>();
  spec.center_ = j.at("center").get<double>();
  spec.scale_ = j.at("scale").get<double>();
  const auto rows = j.at("orthogonalization").get<std::vector<std::vector<double>>>();
  spec.orth_.resize(static_cast<Eigen::Index>(rows.size()),
                    rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      spec.orth_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    }
  }
  spec.finalize();
  return spec;
}

DesignMatrix design_matrix(const BasisSpec& spec, std::span<const double> x1,
                           std::span<const double> x2) {
  if (x1.size() != x2.size()) throw std::invalid_argument("x1/x2 length mismatch");
  DesignMatrix design;
  design.spec_digest = spec.digest();
  design.X.resize(static_cast<Eigen::Index>(x1.size()), static_cast<Eigen::Index>(spec.size()));
  for (std::size_t i = 0; i < x1.size(); ++i) {
    design.X.row(static_cast<Eigen::Index>(i)) = spec.eval(x1[i], x2[i]).values.transpose();
  }
  return design;
}

DesignMatrix design_matrix(const BasisSpec& spec, const PanelDataset& data) {
  return design_matrix(spec, data.x1, data.x2);
}

std::string to_string(BasisKind kind) {
  switch (kind) {
    case BasisKind::intercept_only:
      return "intercept";
    case BasisKind::raw_polynomial:
      return "poly";
    case BasisKind::orthogonal_polynomial:
      return "orthpoly";
    case BasisKind::cubic_bspline:
      return "bspline";
  }
  return "?";
}

std::string to_string(BasisStructure structure) {
  switch (structure) {
    case BasisStructure::additive:
      return "additive";
    case BasisStructure::tensor:
      return "tensor";
    case BasisStructure::univariate:
      return "univariate";
  }
  return "?";
}

BasisKind parse_basis_kind(const std::string& text) {
  if (text == "intercept") return BasisKind::intercept_only;
  if (text == "poly") return BasisKind::raw_polynomial;
  if (text == "orthpoly") return BasisKind::orthogonal_polynomial;
  if (text == "bspline") return BasisKind::cubic_bspline;
  throw ConfigError("unknown basis kind '" + text + "' (intercept|poly|orthpoly|bspline)");
}

BasisStructure parse_basis_structure(const std::string& text) {
  if (text == "additive") return BasisStructure::additive;
  if (text == "tensor") return BasisStructure::tensor;
  if (text == "univariate") return BasisStructure::univariate;
  throw ConfigError("unknown basis structure '" + text + "' (additive|tensor|univariate)");
}

}  // namespace stayers
