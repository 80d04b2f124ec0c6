#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace stayers {

/// Balanced two-period panel. Index i addresses the same unit in every array.
struct PanelDataset {
  std::vector<std::string> unit_id;
  std::vector<double> y1;
  std::vector<double> y2;
  std::vector<double> x1;
  std::vector<double> x2;

  [[nodiscard]] std::size_t size() const { return unit_id.size(); }

  /// Pooled regressor sample (x1 followed by x2).
  [[nodiscard]] std::vector<double> pooled_x() const;

  /// Throws DataError unless every array has the same length n >= 2 and all
  /// values are finite.
  void validate() const;
};

struct ColumnMap {
  std::string id = "id";
  std::string period = "t";
  std::string y = "y";
  std::string x = "x";
};

struct IngestionLog {
  std::size_t rows_read = 0;
  std::size_t units_seen = 0;
  std::size_t units_dropped = 0;
  std::vector<std::string> dropped_ids;
  std::vector<std::string> reasons;
};

struct LoadResult {
  PanelDataset data;
  IngestionLog log;
};

/// Reads a long-format CSV (one row per unit and period, t in {1,2}).
/// Units missing a period or carrying a non-numeric value are dropped and
/// logged; structural problems throw DataError.
[[nodiscard]] LoadResult load_csv(const std::filesystem::path& path, const ColumnMap& columns = {});

/// Writes the long format read by load_csv. Values use the shortest
/// round-trip representation, so a reload reproduces the dataset exactly.
void write_csv(const PanelDataset& data, const std::filesystem::path& path);

struct VariableSummary {
  std::string name;
  double pooled_mean = 0.0;
  double pooled_sd = 0.0;
  double within_pct = 0.0;
  double mean_period1 = 0.0;
  double sd_period1 = 0.0;
  double mean_period2 = 0.0;
  double sd_period2 = 0.0;
};

/// Histogram of x2 - x1. Exact zeros are counted in their own bin; the
/// remaining values use Freedman-Diaconis bins aligned so 0 is an edge.
struct ChangeHistogram {
  std::size_t zero_count = 0;
  double bin_width = 0.0;
  std::vector<double> edges;
  std::vector<std::size_t> counts;

  [[nodiscard]] std::size_t total() const;
};

struct SummaryReport {
  std::size_t n = 0;
  std::vector<VariableSummary> variables;
  ChangeHistogram change_x;
};

/// Share of the total sum of squares that is within-unit, in percent:
/// 100 * sum_it (z_it - zbar_i)^2 / sum_it (z_it - zbar)^2. Zero when the
/// variable has no variation at all.
[[nodiscard]] double within_variation_pct(const std::vector<double>& period1,
                                          const std::vector<double>& period2);

[[nodiscard]] ChangeHistogram change_histogram(const std::vector<double>& x1,
                                               const std::vector<double>& x2);

[[nodiscard]] SummaryReport summarize(const PanelDataset& data);

void to_json(nlohmann::json& j, const SummaryReport& report);
void to_json(nlohmann::json& j, const IngestionLog& log);

}  // namespace stayers
