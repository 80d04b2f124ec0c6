#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "stayers/config.hpp"
#include "stayers/dgp.hpp"
#include "stayers/inference.hpp"
#include "stayers/panel.hpp"
#include "stayers/pipeline.hpp"

namespace stayers {

enum class Command {
  simulate,
  summarize,
  fit_mean,
  fit_quantile,
  time_effects,
  effects,
  bands,
  diff_effect,
  cross_section,
  mc,
};

[[nodiscard]] std::string to_string(Command command);
[[nodiscard]] Command parse_command(const std::string& text);

/// Fully resolved batch configuration. Built from a KeyValues file plus
/// overrides; `resolved()` writes it back so a rerun reproduces the outputs.
struct RunConfig {
  std::optional<std::string> input_path;
  ColumnMap columns;
  std::optional<DgpSpec> dgp;
  std::size_t n = 1000;
  std::uint64_t seed = 1;

  PipelineConfig pipeline;
  bool kinds_explicit = false;
  std::size_t grid_points = 51;
  double grid_lower_q = 0.10;
  double grid_upper_q = 0.90;
  std::vector<double> taus;

  std::size_t boot = 0;
  WeightLaw law;
  double alpha = 0.10;
  SeMethod se = SeMethod::sd;
  unsigned threads = 0;
  std::size_t min_draws = 20;
  std::optional<std::string> archive;

  std::size_t replications = 200;
  OracleOptions oracle;

  std::filesystem::path out_dir = "out";

  /// Throws ConfigError on unknown keys, bad values, or when both or
  /// neither input sources are given.
  [[nodiscard]] static RunConfig from(const KeyValues& kv);
  /// Every setting except the output directory.
  [[nodiscard]] KeyValues resolved() const;
  [[nodiscard]] std::uint64_t digest() const;
};

/// Effect kinds a command computes unless `effects.kinds` overrides them.
[[nodiscard]] std::vector<EffectKind> default_kinds(Command command);

/// Truth for each point of an estimated curve (NaN where the DGP offers
/// none, e.g. cross-section comparators).
[[nodiscard]] std::vector<double> truth_for(const DgpSpec& spec, const EffectCurve& curve,
                                            const OracleOptions& oracle);

struct McRow {
  EffectKind kind = EffectKind::mean_homogeneous;
  SeMethod method = SeMethod::sd;
  std::size_t replications = 0;
  std::size_t points = 0;  ///< grid points with a truth value
  double bias = kNaN;      ///< mean over points of the average error
  double sd = kNaN;        ///< mean over points of the across-replication SD
  double rmse = kNaN;
  double coverage = kNaN;  ///< share of replications whose band covers every point
};

struct McResult {
  EvalGrid grid;
  std::vector<McRow> rows;
};

/// Simulates R datasets from the configured DGP, reruns the pipeline and
/// (when boot > 0) the bootstrap on each, and summarizes against the truth.
/// The x grid comes from the first replication and stays fixed.
[[nodiscard]] McResult monte_carlo(const RunConfig& config, std::vector<SeMethod> methods);

[[nodiscard]] std::string to_csv(const McResult& result);

/// Executes a command, writing artifacts under config.out_dir. Throws the
/// library's error types.
void run(Command command, const RunConfig& config, std::ostream& log);

/// Front door for the CLI: builds the config, runs, and maps errors to
/// exit codes (2 config, 3 data, 4 numerical) with a JSON report on `err`.
int run_main(Command command, const KeyValues& kv, std::ostream& log, std::ostream& err);

}  // namespace stayers
