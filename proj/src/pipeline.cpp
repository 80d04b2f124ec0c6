#include "stayers/pipeline.hpp"

#include <algorithm>

#include "stayers/error.hpp"
#include "stayers/regress.hpp"

namespace stayers {

namespace {

bool wants(const PipelineConfig& c, EffectKind k) {
  return std::find(c.kinds.begin(), c.kinds.end(), k) != c.kinds.end();
}

bool needs_route(const PipelineConfig& c) {
  return wants(c, EffectKind::mean_time_effects) || wants(c, EffectKind::quantile_time_effects) ||
         (wants(c, EffectKind::averaged_quantile) && c.route != TimeEffectRoute::none);
}

bool needs_quantile_fits(const PipelineConfig& c) {
  return wants(c, EffectKind::quantile_homogeneous) ||
         wants(c, EffectKind::quantile_symmetric_diagnostic) ||
         wants(c, EffectKind::sigma_quantiles) || wants(c, EffectKind::shift_quantiles) ||
         wants(c, EffectKind::quantile_time_effects) || wants(c, EffectKind::averaged_quantile) ||
         (needs_route(c) && c.route == TimeEffectRoute::quantiles);
}

bool needs_moment_te(const PipelineConfig& c) {
  return wants(c, EffectKind::sigma_moments) || wants(c, EffectKind::shift_moments) ||
         (needs_route(c) && c.route == TimeEffectRoute::moments);
}

bool needs_quantile_te(const PipelineConfig& c) {
  return wants(c, EffectKind::sigma_quantiles) || wants(c, EffectKind::shift_quantiles) ||
         (needs_route(c) && c.route == TimeEffectRoute::quantiles);
}

bool needs_mean_fits(const PipelineConfig& c) {
  return wants(c, EffectKind::mean_homogeneous) || wants(c, EffectKind::mean_overid_diagnostic) ||
         wants(c, EffectKind::mean_time_effects) || needs_moment_te(c);
}

bool needs_cross_section(const PipelineConfig& c) {
  return wants(c, EffectKind::cross_section_mean) ||
         wants(c, EffectKind::cross_section_quantile) ||
         wants(c, EffectKind::averaged_cross_section_quantile);
}

std::vector<double> merge_taus(std::vector<double> taus, std::span<const double> extra) {
  for (double t : extra) {
    const bool present =
        std::any_of(taus.begin(), taus.end(), [t](double u) { return std::abs(u - t) < 1e-12; });
    if (!present) taus.push_back(t);
  }
  std::sort(taus.begin(), taus.end());
  return taus;
}

BasisOptions univariate(BasisOptions o) {
  if (o.kind != BasisKind::intercept_only) o.structure = BasisStructure::univariate;
  return o;
}

}  // namespace

std::string to_string(TimeEffectRoute route) {
  switch (route) {
    case TimeEffectRoute::none:
      return "none";
    case TimeEffectRoute::moments:
      return "moments";
    case TimeEffectRoute::quantiles:
      return "quantiles";
  }
  return "?";
}

TimeEffectRoute parse_time_effect_route(const std::string& text) {
  if (text == "none") return TimeEffectRoute::none;
  if (text == "moments") return TimeEffectRoute::moments;
  if (text == "quantiles") return TimeEffectRoute::quantiles;
  throw ConfigError("unknown time-effect route '" + text + "' (expected none|moments|quantiles)");
}

void PipelineConfig::validate() const {
  if (kinds.empty()) throw ConfigError("no effect kinds requested");
  if ((wants(*this, EffectKind::mean_time_effects) ||
       wants(*this, EffectKind::quantile_time_effects)) &&
      route == TimeEffectRoute::none) {
    throw ConfigError("time-averaged effects need a time-effect route (moments or quantiles)");
  }
  const auto [upper, lower, location] = te_taus;
  if (!(lower > 0.0 && upper < 1.0 && lower < upper && location > 0.0 && location < 1.0)) {
    throw ConfigError("time-effect quantiles must satisfy 0 < lower < upper < 1 and 0 < location < 1");
  }
  if (transform.kind == TransformKind::linear && transform.pi == 0.0) {
    throw ConfigError("linear outcome transform needs a nonzero weight on y2");
  }
}

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  std::vector<std::string> kinds;
  for (auto k : c.kinds) kinds.push_back(to_string(k));
  j = {{"basis",
        {{"kind", to_string(c.basis.kind)},
         {"structure", to_string(c.basis.structure)},
         {"degree", c.basis.degree},
         {"intercept", c.basis.intercept}}},
       {"cross_section_basis",
        {{"kind", to_string(c.cross_section_basis.kind)}, {"degree", c.cross_section_basis.degree}}},
       {"kinds", kinds},
       {"route", to_string(c.route)},
       {"te_taus", c.te_taus},
       {"transform",
        {{"kind", c.transform.kind == TransformKind::difference ? "difference"
                  : c.transform.kind == TransformKind::period2  ? "period2"
                                                                : "linear"},
         {"lambda", c.transform.lambda},
         {"pi", c.transform.pi}}}};
}

Pipeline::Pipeline(const PanelDataset& data, PipelineConfig config, EvalGrid grid)
    : data_(data),
      config_(std::move(config)),
      grid_(std::move(grid)),
      spec_(make_spec(config_.basis, data_.pooled_x())),
      cs_spec_(needs_cross_section(config_)
                   ? make_spec(univariate(config_.cross_section_basis), data_.pooled_x())
                   : BasisSpec::intercept_only()) {
  data_.validate();
  config_.validate();
  grid_.validate();
  design_ = design_matrix(spec_, data_);
  if (needs_cross_section(config_)) {
    cs_design1_ = design_matrix(cs_spec_, data_.x1, data_.x1);
    cs_design2_ = design_matrix(cs_spec_, data_.x2, data_.x2);
  }
  quantile_taus_ = grid_.taus;
  if (needs_quantile_te(config_)) quantile_taus_ = merge_taus(quantile_taus_, config_.te_taus);
  measure_ = data_.pooled_x();
}

std::vector<EffectCurve> Pipeline::compute(std::span<const double> weights) const {
  std::vector<double> ones;
  if (weights.empty()) {
    ones.assign(data_.size(), 1.0);
    weights = ones;
  }
  if (weights.size() != data_.size()) throw std::invalid_argument("weight vector has wrong length");

  const PipelineConfig& c = config_;
  std::optional<LinearFit> m1, m2, v1, v2;
  if (needs_mean_fits(c)) {
    m1 = wls_fit(design_, data_.y1, weights, FitTarget::mean_period1);
    m2 = wls_fit(design_, data_.y2, weights, FitTarget::mean_period2);
  }
  if (needs_moment_te(c)) {
    v1 = variance_fit(design_, data_.y1, *m1, weights);
    v2 = variance_fit(design_, data_.y2, *m2, weights);
  }
  std::optional<QuantileFit> q1, q2;
  if (needs_quantile_fits(c)) {
    q1 = qr_fit(design_, data_.y1, quantile_taus_, weights, 1);
    q2 = qr_fit(design_, data_.y2, quantile_taus_, weights, 2);
  }

  std::optional<TimeEffectFns> te_moments, te_quantiles;
  if (needs_moment_te(c)) {
    te_moments = scale_location_from_moments(*m1, *m2, *v1, *v2, spec_, grid_);
  }
  if (needs_quantile_te(c)) {
    te_quantiles = scale_location_from_quantiles(*q1, *q2, spec_, grid_, c.te_taus[0],
                                                 c.te_taus[1], c.te_taus[2]);
  }
  const TimeEffectFns* te = nullptr;
  if (c.route == TimeEffectRoute::moments && te_moments) te = &*te_moments;
  if (c.route == TimeEffectRoute::quantiles && te_quantiles) te = &*te_quantiles;

  std::optional<EffectWithDiagnostic> mean_h, quant_h;
  std::optional<EffectCurve> quant_te, cs_quant;
  auto quantile_homogeneous = [&]() -> const EffectWithDiagnostic& {
    if (!quant_h) quant_h = quantile_effect_homogeneous(*q1, *q2, spec_, grid_);
    return *quant_h;
  };
  auto quantile_te = [&]() -> const EffectCurve& {
    if (!quant_te) quant_te = quantile_effect_time_effects(*q1, *q2, *te, spec_, grid_);
    return *quant_te;
  };
  auto cross_quantile = [&]() -> const EffectCurve& {
    if (!cs_quant) {
      cs_quant = cross_section_effect(*cs_design1_, *cs_design2_, data_.y1, data_.y2, cs_spec_,
                                      grid_.taus, grid_, weights);
    }
    return *cs_quant;
  };

  std::vector<EffectCurve> out;
  out.reserve(c.kinds.size());
  for (EffectKind kind : c.kinds) {
    switch (kind) {
      case EffectKind::mean_homogeneous:
      case EffectKind::mean_overid_diagnostic:
        if (!mean_h) mean_h = mean_effect_homogeneous(*m1, *m2, spec_, grid_);
        out.push_back(kind == EffectKind::mean_homogeneous ? mean_h->effect : mean_h->diagnostic);
        break;
      case EffectKind::quantile_homogeneous:
        out.push_back(quantile_homogeneous().effect);
        break;
      case EffectKind::quantile_symmetric_diagnostic:
        out.push_back(quantile_homogeneous().diagnostic);
        break;
      case EffectKind::sigma_moments:
        out.push_back(te_moments->sigma_curve());
        break;
      case EffectKind::shift_moments:
        out.push_back(te_moments->shift_curve());
        break;
      case EffectKind::sigma_quantiles:
        out.push_back(te_quantiles->sigma_curve());
        break;
      case EffectKind::shift_quantiles:
        out.push_back(te_quantiles->shift_curve());
        break;
      case EffectKind::mean_time_effects:
        out.push_back(mean_effect_time_effects(*m1, *m2, *te, spec_, grid_));
        break;
      case EffectKind::quantile_time_effects:
        out.push_back(quantile_te());
        break;
      case EffectKind::averaged_quantile:
        out.push_back(averaged_quantile_effect(
            te != nullptr ? quantile_te() : quantile_homogeneous().effect, measure_));
        break;
      case EffectKind::diff_outcome:
        out.push_back(diff_outcome_effect(data_, spec_, c.transform, grid_.taus, grid_, weights));
        break;
      case EffectKind::cross_section_mean:
        out.push_back(cross_section_effect(*cs_design1_, *cs_design2_, data_.y1, data_.y2,
                                           cs_spec_, {}, grid_, weights));
        break;
      case EffectKind::cross_section_quantile:
        out.push_back(cross_quantile());
        break;
      case EffectKind::averaged_cross_section_quantile:
        out.push_back(averaged_quantile_effect(cross_quantile(), measure_));
        break;
    }
  }
  return out;
}

}  // namespace stayers
