#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stayers/basis.hpp"
#include "stayers/effects.hpp"
#include "stayers/panel.hpp"

namespace stayers {

enum class TimeEffectRoute { none, moments, quantiles };

[[nodiscard]] std::string to_string(TimeEffectRoute route);
[[nodiscard]] TimeEffectRoute parse_time_effect_route(const std::string& text);

/// Everything needed to turn a dataset and a weight vector into effect
/// curves. The bootstrap reruns exactly this computation per draw.
struct PipelineConfig {
  BasisOptions basis;
  /// Basis for the cross-section comparator; its structure is forced to
  /// univariate.
  BasisOptions cross_section_basis{BasisKind::cubic_bspline, BasisStructure::univariate, 2, true};
  std::vector<EffectKind> kinds{EffectKind::mean_homogeneous};
  TimeEffectRoute route = TimeEffectRoute::none;
  std::array<double, 3> te_taus{0.9, 0.1, 0.5};  ///< upper, lower, location
  OutcomeTransform transform;

  /// Throws ConfigError when the requested kinds need fits the route does
  /// not provide.
  void validate() const;
};

void to_json(nlohmann::json& j, const PipelineConfig& config);

/// Bases, designs, and grids fixed once from the unweighted sample.
class Pipeline {
 public:
  Pipeline(const PanelDataset& data, PipelineConfig config, EvalGrid grid);

  [[nodiscard]] const PipelineConfig& config() const { return config_; }
  [[nodiscard]] const EvalGrid& grid() const { return grid_; }
  [[nodiscard]] const BasisSpec& spec() const { return spec_; }
  [[nodiscard]] const BasisSpec& cross_section_spec() const { return cs_spec_; }
  [[nodiscard]] std::size_t sample_size() const { return data_.size(); }
  [[nodiscard]] const PanelDataset& data() const { return data_; }

  /// Curves in the order of config().kinds. Empty weights means unit weights.
  [[nodiscard]] std::vector<EffectCurve> compute(std::span<const double> weights = {}) const;

 private:
  PanelDataset data_;
  PipelineConfig config_;
  EvalGrid grid_;
  BasisSpec spec_;
  BasisSpec cs_spec_;
  DesignMatrix design_;
  std::optional<DesignMatrix> cs_design1_;
  std::optional<DesignMatrix> cs_design2_;
  std::vector<double> quantile_taus_;
  std::vector<double> measure_;
};

}  // namespace stayers
