#include "stayers/run.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "stayers/digest.hpp"
#include "stayers/error.hpp"
#include "stayers/regress.hpp"

namespace stayers {

namespace {

namespace fs = std::filesystem;

constexpr std::pair<Command, const char*> kCommandNames[] = {
    {Command::simulate, "simulate"},         {Command::summarize, "summarize"},
    {Command::fit_mean, "fit-mean"},         {Command::fit_quantile, "fit-quantile"},
    {Command::time_effects, "time-effects"}, {Command::effects, "effects"},
    {Command::bands, "bands"},               {Command::diff_effect, "diff-effect"},
    {Command::cross_section, "cross-section"}, {Command::mc, "mc"},
};

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

std::string transform_name(TransformKind kind) {
  switch (kind) {
    case TransformKind::difference:
      return "difference";
    case TransformKind::period2:
      return "period2";
    case TransformKind::linear:
      return "linear";
  }
  return "?";
}

TransformKind parse_transform(const std::string& text) {
  if (text == "difference") return TransformKind::difference;
  if (text == "period2") return TransformKind::period2;
  if (text == "linear") return TransformKind::linear;
  throw ConfigError("unknown outcome transform '" + text + "' (expected difference|period2|linear)");
}

std::string hex(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << v;
  return out.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

bool needs_data(Command c, const RunConfig& cfg) {
  if (c == Command::bands && cfg.archive) return false;
  return c != Command::mc;
}

struct Artifacts {
  fs::path dir;
  nlohmann::json outputs = nlohmann::json::array();

  void add(const std::string& file, const std::string& what, const std::string& regime = "") {
    nlohmann::json entry = {{"file", file}, {"content", what}};
    if (!regime.empty()) entry["regime"] = regime;
    outputs.push_back(entry);
  }

  void curve(const EffectCurve& c) {
    const std::string base = to_string(c.kind);
    write_text(dir / (base + ".csv"), to_csv(c));
    nlohmann::json j = c;
    write_json(dir / (base + ".json"), j);
    add(base + ".csv", "effect-curve", to_string(c.regime));
    add(base + ".json", "effect-curve", to_string(c.regime));
  }
};

PanelDataset acquire_data(const RunConfig& cfg, Artifacts& art, std::ostream& log) {
  if (cfg.input_path) {
    const auto loaded = load_csv(*cfg.input_path, cfg.columns);
    nlohmann::json j = loaded.log;
    write_json(art.dir / "ingestion.json", j);
    art.add("ingestion.json", "ingestion-log");
    log << "loaded " << loaded.data.size() << " units from " << *cfg.input_path << " ("
        << loaded.log.units_dropped << " dropped)\n";
    return loaded.data;
  }
  if (!cfg.dgp) throw ConfigError("no input: set input.path or dgp.family");
  log << "simulating " << cfg.n << " units from the " << to_string(cfg.dgp->family)
      << " design\n";
  return simulate(*cfg.dgp, cfg.n, cfg.seed);
}

EvalGrid grid_for(const RunConfig& cfg, const PanelDataset& data) {
  return make_eval_grid(data, cfg.grid_points, cfg.grid_lower_q, cfg.grid_upper_q, cfg.taus);
}

PipelineConfig pipeline_for(Command command, const RunConfig& cfg) {
  PipelineConfig p = cfg.pipeline;
  if (!cfg.kinds_explicit) p.kinds = default_kinds(command);
  if (command == Command::time_effects && p.route == TimeEffectRoute::none) {
    p.route = TimeEffectRoute::moments;
  }
  return p;
}

void write_fits(Command command, const Pipeline& pipe, Artifacts& art) {
  const auto& data = pipe.data();
  write_json(art.dir / "basis.json", pipe.spec().to_json());
  art.add("basis.json", "basis-spec");
  const DesignMatrix design = design_matrix(pipe.spec(), data);
  const std::vector<double> w(data.size(), 1.0);
  if (command == Command::fit_mean) {
    const auto m1 = wls_fit(design, data.y1, w, FitTarget::mean_period1);
    const auto m2 = wls_fit(design, data.y2, w, FitTarget::mean_period2);
    write_json(art.dir / "fit-mean-period-1.json", nlohmann::json(m1));
    write_json(art.dir / "fit-mean-period-2.json", nlohmann::json(m2));
    art.add("fit-mean-period-1.json", "linear-fit");
    art.add("fit-mean-period-2.json", "linear-fit");
  } else if (command == Command::fit_quantile) {
    const auto& taus = pipe.grid().taus;
    const auto q1 = qr_fit(design, data.y1, taus, w, 1);
    const auto q2 = qr_fit(design, data.y2, taus, w, 2);
    write_json(art.dir / "fit-quantile-period-1.json", nlohmann::json(q1));
    write_json(art.dir / "fit-quantile-period-2.json", nlohmann::json(q2));
    art.add("fit-quantile-period-1.json", "quantile-fit");
    art.add("fit-quantile-period-2.json", "quantile-fit");
  }
}

std::vector<EffectCurve> banded(const BootstrapRun& boot, const RunConfig& cfg,
                                std::vector<EffectCurve> curves, Artifacts& art) {
  nlohmann::json bands = nlohmann::json::array();
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const auto band = uniform_band(boot.curves[c], boot.n, cfg.alpha, cfg.se, cfg.min_draws);
    nlohmann::json bj = band;
    bj["kind"] = to_string(curves[c].kind);
    bj["regime"] = to_string(curves[c].regime);
    bands.push_back(bj);
    curves[c] = apply_band(std::move(curves[c]), band);
  }
  write_json(art.dir / "bands.json", bands);
  art.add("bands.json", "uniform-bands");
  return curves;
}

void run_pipeline(Command command, const RunConfig& cfg, Artifacts& art, std::ostream& log,
                  nlohmann::json& manifest) {
  const PanelDataset data = acquire_data(cfg, art, log);
  nlohmann::json summary = summarize(data);
  write_json(art.dir / "summary.json", summary);
  art.add("summary.json", "summary-report");

  const PipelineConfig pconf = pipeline_for(command, cfg);
  const Pipeline pipe(data, pconf, grid_for(cfg, data));
  manifest["grid"] = {{"points", pipe.grid().xs.size()},
                      {"taus", pipe.grid().taus},
                      {"provenance", pipe.grid().provenance}};
  manifest["basis_digest"] = hex(pipe.spec().digest());
  write_fits(command, pipe, art);

  auto curves = pipe.compute();
  std::size_t draws = cfg.boot;
  if (command == Command::bands && draws == 0) draws = 499;
  if (draws > 0) {
    log << "bootstrap: " << draws << " draws, " << to_string(cfg.law) << " weights\n";
    const auto boot = bootstrap_curves(pipe, curves, {draws, cfg.seed, cfg.law, cfg.threads},
                                       cfg.digest());
    nlohmann::json bj = boot;
    write_json(art.dir / "bootstrap.json", bj);
    art.add("bootstrap.json", "bootstrap-archive");
    manifest["bootstrap"] = {{"draws", draws},
                             {"seed", cfg.seed},
                             {"attempts", boot.attempts},
                             {"failures", boot.failures.size()}};
    curves = banded(boot, cfg, std::move(curves), art);
  }
  for (const auto& c : curves) art.curve(c);
  log << "wrote " << curves.size() << " effect curves to " << art.dir.string() << "\n";
}

void run_bands_from_archive(const RunConfig& cfg, Artifacts& art, std::ostream& log,
                            nlohmann::json& manifest) {
  std::ifstream in(*cfg.archive);
  if (!in) throw DataError("cannot open bootstrap archive '" + *cfg.archive + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bootstrap archive is not JSON: ") + e.what());
  }
  const BootstrapRun boot = j.get<BootstrapRun>();
  manifest["archive"] = {{"path", *cfg.archive}, {"config_digest", hex(boot.config_digest)}};
  std::vector<EffectCurve> curves;
  for (const auto& cd : boot.curves) {
    EffectCurve c;
    c.kind = cd.kind;
    c.regime = cd.regime;
    c.points = cd.points;
    curves.push_back(std::move(c));
  }
  curves = banded(boot, cfg, std::move(curves), art);
  for (const auto& c : curves) art.curve(c);
  log << "recomputed " << curves.size() << " bands from " << *cfg.archive << "\n";
}

}  // namespace

std::string to_string(Command command) {
  for (const auto& [c, name] : kCommandNames) {
    if (c == command) return name;
  }
  return "?";
}

Command parse_command(const std::string& text) {
  for (const auto& [c, name] : kCommandNames) {
    if (text == name) return c;
  }
  throw ConfigError("unknown command '" + text + "'");
}

std::vector<EffectKind> default_kinds(Command command) {
  using K = EffectKind;
  switch (command) {
    case Command::fit_mean:
      return {K::mean_homogeneous, K::mean_overid_diagnostic, K::cross_section_mean};
    case Command::fit_quantile:
      return {K::quantile_homogeneous, K::quantile_symmetric_diagnostic,
              K::cross_section_quantile};
    case Command::time_effects:
      return {K::sigma_moments,     K::shift_moments,         K::sigma_quantiles,
              K::shift_quantiles,   K::mean_time_effects,     K::quantile_time_effects,
              K::averaged_quantile};
    case Command::diff_effect:
      return {K::diff_outcome};
    case Command::cross_section:
      return {K::cross_section_mean, K::cross_section_quantile,
              K::averaged_cross_section_quantile};
    case Command::mc:
      return {K::mean_homogeneous};
    default:
      return {K::mean_homogeneous, K::mean_overid_diagnostic, K::quantile_homogeneous,
              K::quantile_symmetric_diagnostic, K::cross_section_mean, K::cross_section_quantile};
  }
}

RunConfig RunConfig::from(const KeyValues& kv) {
  RunConfig c;
  if (auto p = kv.find("input.path")) c.input_path = *p;
  c.columns.id = kv.get_string("input.id_col", c.columns.id);
  c.columns.period = kv.get_string("input.t_col", c.columns.period);
  c.columns.y = kv.get_string("input.y_col", c.columns.y);
  c.columns.x = kv.get_string("input.x_col", c.columns.x);
  const std::int64_t n = kv.get_int("input.n", static_cast<std::int64_t>(c.n));
  if (n < 2) throw ConfigError("input.n must be at least 2");
  c.n = static_cast<std::size_t>(n);
  bool any_dgp = false;
  for (const auto& [key, value] : kv.entries()) any_dgp = any_dgp || key.rfind("dgp.", 0) == 0;
  if (any_dgp) c.dgp = dgp_from_config(kv);
  if (c.input_path && c.dgp) {
    throw ConfigError("exactly one input source allowed: input.path or dgp.* keys");
  }
  c.seed = kv.get_uint("seed", c.seed);

  auto& p = c.pipeline;
  p.basis.kind = parse_basis_kind(kv.get_string("basis.kind", to_string(p.basis.kind)));
  p.basis.structure =
      parse_basis_structure(kv.get_string("basis.structure", to_string(p.basis.structure)));
  p.basis.degree = static_cast<int>(kv.get_int("basis.degree", p.basis.degree));
  p.basis.intercept = kv.get_bool("basis.intercept", p.basis.intercept);
  p.cross_section_basis.kind =
      parse_basis_kind(kv.get_string("cross_section.kind", to_string(p.cross_section_basis.kind)));
  p.cross_section_basis.degree =
      static_cast<int>(kv.get_int("cross_section.degree", p.cross_section_basis.degree));
  if (auto kinds = kv.find("effects.kinds")) {
    c.kinds_explicit = true;
    p.kinds.clear();
    for (const auto& k : kv.get_strings("effects.kinds", {})) p.kinds.push_back(parse_effect_kind(k));
  }
  p.route = parse_time_effect_route(kv.get_string("time_effects.route", to_string(p.route)));
  const auto te = kv.get_doubles("time_effects.taus", {p.te_taus.begin(), p.te_taus.end()});
  if (te.size() != 3) throw ConfigError("time_effects.taus needs upper, lower, location");
  p.te_taus = {te[0], te[1], te[2]};
  p.transform.kind = parse_transform(kv.get_string("transform.kind", "difference"));
  p.transform.lambda = kv.get_double("transform.lambda", p.transform.lambda);
  p.transform.pi = kv.get_double("transform.pi", p.transform.pi);

  const std::int64_t points = kv.get_int("grid.points", static_cast<std::int64_t>(c.grid_points));
  if (points < 1) throw ConfigError("grid.points must be positive");
  c.grid_points = static_cast<std::size_t>(points);
  c.grid_lower_q = kv.get_double("grid.lower_q", c.grid_lower_q);
  c.grid_upper_q = kv.get_double("grid.upper_q", c.grid_upper_q);
  c.taus = kv.get_doubles("grid.taus", default_tau_grid());
  if (!(c.grid_lower_q >= 0.0 && c.grid_upper_q <= 1.0 && c.grid_lower_q < c.grid_upper_q)) {
    throw ConfigError("grid quantiles must satisfy 0 <= lower_q < upper_q <= 1");
  }
  EvalGrid probe{{0.0}, c.taus, ""};
  try {
    probe.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("grid.taus: ") + e.what());
  }

  const std::int64_t boot = kv.get_int("bootstrap.draws", 0);
  if (boot < 0 || boot == 1) throw ConfigError("bootstrap.draws must be 0 or at least 2");
  c.boot = static_cast<std::size_t>(boot);
  c.law = parse_weight_law(kv.get_string("bootstrap.law", "exponential"));
  c.alpha = kv.get_double("bootstrap.alpha", c.alpha);
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ConfigError("bootstrap.alpha must lie in (0, 1)");
  c.se = parse_se_method(kv.get_string("bootstrap.se", "sd"));
  c.threads = static_cast<unsigned>(kv.get_uint("bootstrap.threads", 0));
  c.min_draws = static_cast<std::size_t>(kv.get_uint("bootstrap.min_draws", c.min_draws));
  if (auto a = kv.find("bootstrap.archive")) c.archive = *a;

  const std::int64_t reps = kv.get_int("mc.replications", static_cast<std::int64_t>(c.replications));
  if (reps < 1) throw ConfigError("mc.replications must be positive");
  c.replications = static_cast<std::size_t>(reps);
  c.oracle.n_oracle = kv.get_uint("oracle.n", c.oracle.n_oracle);
  c.oracle.seed = kv.get_uint("oracle.seed", c.oracle.seed);
  c.oracle.groups = kv.get_uint("oracle.groups", c.oracle.groups);

  c.out_dir = kv.get_string("output.dir", c.out_dir.string());
  kv.require_all_used();
  p.validate();
  return c;
}

KeyValues RunConfig::resolved() const {
  KeyValues kv;
  if (input_path) kv.set("input.path", *input_path);
  kv.set("input.id_col", columns.id);
  kv.set("input.t_col", columns.period);
  kv.set("input.y_col", columns.y);
  kv.set("input.x_col", columns.x);
  kv.set("input.n", std::to_string(n));
  if (dgp) dgp_to_config(*dgp, kv);
  kv.set("seed", std::to_string(seed));
  const auto& p = pipeline;
  kv.set("basis.kind", to_string(p.basis.kind));
  kv.set("basis.structure", to_string(p.basis.structure));
  kv.set("basis.degree", std::to_string(p.basis.degree));
  kv.set("basis.intercept", p.basis.intercept ? "true" : "false");
  kv.set("cross_section.kind", to_string(p.cross_section_basis.kind));
  kv.set("cross_section.degree", std::to_string(p.cross_section_basis.degree));
  if (kinds_explicit) {
    std::string kinds;
    for (auto k : p.kinds) kinds += (kinds.empty() ? "" : ",") + to_string(k);
    kv.set("effects.kinds", kinds);
  }
  kv.set("time_effects.route", to_string(p.route));
  kv.set("time_effects.taus", join({p.te_taus.begin(), p.te_taus.end()}));
  kv.set("transform.kind", transform_name(p.transform.kind));
  kv.set("transform.lambda", format_double(p.transform.lambda));
  kv.set("transform.pi", format_double(p.transform.pi));
  kv.set("grid.points", std::to_string(grid_points));
  kv.set("grid.lower_q", format_double(grid_lower_q));
  kv.set("grid.upper_q", format_double(grid_upper_q));
  kv.set("grid.taus", join(taus));
  kv.set("bootstrap.draws", std::to_string(boot));
  kv.set("bootstrap.law", to_string(law));
  kv.set("bootstrap.alpha", format_double(alpha));
  kv.set("bootstrap.se", to_string(se));
  kv.set("bootstrap.threads", std::to_string(threads));
  kv.set("bootstrap.min_draws", std::to_string(min_draws));
  if (archive) kv.set("bootstrap.archive", *archive);
  kv.set("mc.replications", std::to_string(replications));
  kv.set("oracle.n", std::to_string(oracle.n_oracle));
  kv.set("oracle.seed", std::to_string(oracle.seed));
  kv.set("oracle.groups", std::to_string(oracle.groups));
  return kv;
}

std::uint64_t RunConfig::digest() const {
  // Thread count does not change results, so it stays out of the digest.
  KeyValues kv = resolved();
  kv.set("bootstrap.threads", "*");
  Digest d;
  d.add(kv.dump());
  return d.value();
}

std::vector<double> truth_for(const DgpSpec& spec, const EffectCurve& curve,
                              const OracleOptions& oracle) {
  std::vector<double> truth(curve.points.size(), kNaN);
  const bool ls = spec.family == DgpFamily::location_scale;
  auto effect = [&](const EffectPoint& p, TruthKind kind) {
    return true_effect(spec, p.x, kind, std::isfinite(p.tau) ? p.tau : 0.5, oracle).value;
  };
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto& p = curve.points[i];
    switch (curve.kind) {
      case EffectKind::mean_homogeneous:
        if (!ls) truth[i] = effect(p, TruthKind::mean);
        break;
      case EffectKind::mean_overid_diagnostic:
        if (!ls) truth[i] = 0.0;
        break;
      case EffectKind::quantile_homogeneous:
      case EffectKind::quantile_symmetric_diagnostic:
        if (!ls) truth[i] = effect(p, TruthKind::quantile);
        break;
      case EffectKind::sigma_moments:
      case EffectKind::sigma_quantiles:
        truth[i] = true_sigma(spec, p.x);
        break;
      case EffectKind::shift_moments:
      case EffectKind::shift_quantiles:
        truth[i] = true_shift(spec, p.x);
        break;
      case EffectKind::mean_time_effects:
        truth[i] = effect(p, TruthKind::time_averaged_mean);
        break;
      case EffectKind::quantile_time_effects:
        truth[i] = effect(p, TruthKind::time_averaged_quantile);
        break;
      default:
        break;
    }
  }
  return truth;
}

McResult monte_carlo(const RunConfig& cfg, std::vector<SeMethod> methods) {
  if (!cfg.dgp) throw ConfigError("mc needs a DGP input (dgp.* keys)");
  const std::size_t R = cfg.replications;
  const PipelineConfig pconf = pipeline_for(Command::mc, cfg);
  const std::size_t K = pconf.kinds.size();
  if (cfg.boot == 0) methods.clear();

  McResult result;
  result.grid = grid_for(cfg, simulate(*cfg.dgp, cfg.n, cfg.seed));

  struct Replication {
    std::vector<std::vector<double>> estimates;        // [kind][point]
    std::vector<std::vector<int>> covered;              // [kind][method]
  };
  std::vector<Replication> reps(R);
  std::vector<std::vector<double>> truths;
  std::vector<std::uint32_t> unused;

  auto run_rep = [&](std::size_t r) {
    const std::uint64_t seed = cfg.seed + r;
    const PanelDataset data = simulate(*cfg.dgp, cfg.n, seed);
    const Pipeline pipe(data, pconf, result.grid);
    const auto curves = pipe.compute();
    Replication rep;
    for (const auto& c : curves) rep.estimates.push_back(c.estimates());
    rep.covered.assign(K, std::vector<int>(methods.size(), 0));
    if (!methods.empty()) {
      const auto boot = bootstrap_curves(pipe, curves, {cfg.boot, seed, cfg.law, 1});
      for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t m = 0; m < methods.size(); ++m) {
          const auto band = uniform_band(boot.curves[k], boot.n, cfg.alpha, methods[m],
                                         cfg.min_draws);
          const auto banded_curve = apply_band(curves[k], band);
          bool ok = true;
          for (std::size_t g = 0; g < banded_curve.points.size(); ++g) {
            const auto& p = banded_curve.points[g];
            if (!std::isfinite(truths[k][g]) || !std::isfinite(p.estimate)) continue;
            ok = ok && p.lower <= truths[k][g] && truths[k][g] <= p.upper;
          }
          rep.covered[k][m] = ok ? 1 : 0;
        }
      }
    }
    reps[r] = std::move(rep);
  };

  {
    // The first replication fixes the curve layout used to evaluate the truth.
    const PanelDataset data = simulate(*cfg.dgp, cfg.n, cfg.seed);
    const Pipeline pipe(data, pconf, result.grid);
    for (const auto& c : pipe.compute()) truths.push_back(truth_for(*cfg.dgp, c, cfg.oracle));
  }

  unsigned threads = cfg.threads == 0 ? std::max(1U, std::thread::hardware_concurrency())
                                      : cfg.threads;
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, R));
  if (threads <= 1) {
    for (std::size_t r = 0; r < R; ++r) run_rep(r);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t r = next++; r < R; r = next++) {
          try {
            run_rep(r);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
  }

  for (std::size_t k = 0; k < K; ++k) {
    McRow base;
    base.kind = pconf.kinds[k];
    base.replications = R;
    double bias_sum = 0.0;
    double sd_sum = 0.0;
    double mse_sum = 0.0;
    std::size_t points = 0;
    for (std::size_t g = 0; g < truths[k].size(); ++g) {
      if (!std::isfinite(truths[k][g])) continue;
      double s = 0.0;
      double ss = 0.0;
      double se = 0.0;
      std::size_t m = 0;
      for (const auto& rep : reps) {
        const double e = rep.estimates[k][g];
        if (!std::isfinite(e)) continue;
        s += e;
        ss += e * e;
        se += (e - truths[k][g]) * (e - truths[k][g]);
        ++m;
      }
      if (m == 0) continue;
      const double mean = s / static_cast<double>(m);
      bias_sum += mean - truths[k][g];
      sd_sum += m > 1 ? std::sqrt(std::max(0.0, (ss - static_cast<double>(m) * mean * mean) /
                                                    static_cast<double>(m - 1)))
                      : 0.0;
      mse_sum += se / static_cast<double>(m);
      ++points;
    }
    base.points = points;
    if (points > 0) {
      base.bias = bias_sum / static_cast<double>(points);
      base.sd = sd_sum / static_cast<double>(points);
      base.rmse = std::sqrt(mse_sum / static_cast<double>(points));
    }
    if (methods.empty()) {
      result.rows.push_back(base);
      continue;
    }
    for (std::size_t m = 0; m < methods.size(); ++m) {
      McRow row = base;
      row.method = methods[m];
      if (points > 0) {
        double hits = 0.0;
        for (const auto& rep : reps) hits += rep.covered[k][m];
        row.coverage = hits / static_cast<double>(R);
      }
      result.rows.push_back(row);
    }
  }
  return result;
}

std::string to_csv(const McResult& result) {
  auto num = [](double v) { return std::isfinite(v) ? format_double(v) : std::string("NA"); };
  std::ostringstream out;
  out << "kind,regime,se_method,replications,points,bias,sd,rmse,coverage\n";
  for (const auto& r : result.rows) {
    const bool has_band = std::isfinite(r.coverage);
    out << to_string(r.kind) << ',' << to_string(regime_of(r.kind));
    out << ',' << (has_band ? to_string(r.method) : "NA") << ',' << r.replications << ','
        << r.points << ',' << num(r.bias) << ',' << num(r.sd) << ',' << num(r.rmse) << ','
        << num(r.coverage) << '\n';
  }
  return out.str();
}

void run(Command command, const RunConfig& cfg, std::ostream& log) {
  if (needs_data(command, cfg) && !cfg.input_path && !cfg.dgp) {
    throw ConfigError("no input: set input.path or dgp.* keys");
  }
  if (command == Command::simulate && !cfg.dgp) throw ConfigError("simulate needs dgp.* keys");
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw DataError("cannot create output directory '" + cfg.out_dir.string() + "'");

  Artifacts art{cfg.out_dir};
  nlohmann::json manifest = {{"command", to_string(command)},
                             {"config_digest", hex(cfg.digest())},
                             {"seed", cfg.seed},
                             {"resolved_config", "resolved.conf"}};
  if (cfg.dgp) manifest["data_source"] = "dgp:" + to_string(cfg.dgp->family);
  if (cfg.input_path) manifest["data_source"] = "file:" + *cfg.input_path;
  write_text(cfg.out_dir / "resolved.conf", cfg.resolved().dump());

  switch (command) {
    case Command::simulate: {
      const PanelDataset data = simulate(*cfg.dgp, cfg.n, cfg.seed);
      write_csv(data, cfg.out_dir / "data.csv");
      art.add("data.csv", "panel-data");
      log << "wrote " << data.size() << " simulated units\n";
      break;
    }
    case Command::summarize: {
      const PanelDataset data = acquire_data(cfg, art, log);
      nlohmann::json summary = summarize(data);
      write_json(cfg.out_dir / "summary.json", summary);
      art.add("summary.json", "summary-report");
      break;
    }
    case Command::mc: {
      std::vector<SeMethod> methods{cfg.se};
      const auto result = monte_carlo(cfg, methods);
      write_text(cfg.out_dir / "mc.csv", to_csv(result));
      art.add("mc.csv", "monte-carlo-table");
      manifest["replications"] = cfg.replications;
      if (cfg.replications < 50) {
        manifest["warning"] = "fewer than 50 replications; coverage is not reliable";
      }
      log << "wrote Monte Carlo table for " << cfg.replications << " replications\n";
      break;
    }
    case Command::bands:
      if (cfg.archive) {
        run_bands_from_archive(cfg, art, log, manifest);
        break;
      }
      [[fallthrough]];
    default:
      run_pipeline(command, cfg, art, log, manifest);
  }
  manifest["outputs"] = art.outputs;
  write_json(cfg.out_dir / "manifest.json", manifest);
}

int run_main(Command command, const KeyValues& kv, std::ostream& log, std::ostream& err) {
  int code = 0;
  std::string category;
  std::string message;
  std::optional<fs::path> out_dir;
  try {
    const RunConfig cfg = RunConfig::from(kv);
    out_dir = cfg.out_dir;
    run(command, cfg, log);
    return 0;
  } catch (const ConfigError& e) {
    code = 2, category = "config", message = e.what();
  } catch (const std::invalid_argument& e) {
    code = 2, category = "config", message = e.what();
  } catch (const DataError& e) {
    code = 3, category = "data", message = e.what();
  } catch (const NumericalError& e) {
    code = 4, category = "numerical", message = e.what();
  } catch (const std::exception& e) {
    code = 3, category = "io", message = e.what();
  }
  const nlohmann::json report = {
      {"error", {{"command", to_string(command)}, {"category", category}, {"message", message},
                 {"exit_code", code}}}};
  err << report.dump() << "\n";
  if (out_dir) {
    std::error_code ec;
    if (fs::is_directory(*out_dir, ec)) {
      std::ofstream out(*out_dir / "error.json");
      out << report.dump(2) << "\n";
    }
  }
  return code;
}

}  // namespace stayers
