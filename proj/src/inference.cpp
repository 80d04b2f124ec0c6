#include "stayers/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <sstream>
#include <thread>

#include "stayers/error.hpp"

namespace stayers {

namespace {

constexpr double kNormalIqr = 1.349;

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(text);
  while (std::getline(in, part, sep)) parts.push_back(part);
  return parts;
}

double parse_number(const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || text.empty()) throw ConfigError("bad number '" + text + "' in weight law");
  return v;
}

bool included(const EffectPoint& p) { return std::isfinite(p.estimate); }

}  // namespace

void WeightLaw::validate() const {
  if (kind != WeightLawKind::custom) return;
  if (values.empty() || values.size() != probs.size()) {
    throw ConfigError("custom weight law needs matching values and probabilities");
  }
  double total = 0.0;
  double mean = 0.0;
  double second = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] >= 0.0) || !std::isfinite(values[i])) {
      throw ConfigError("custom weight law values must be finite and nonnegative");
    }
    if (!(probs[i] >= 0.0)) throw ConfigError("custom weight law probabilities must be nonnegative");
    total += probs[i];
    mean += probs[i] * values[i];
    second += probs[i] * values[i] * values[i];
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("custom weight law probabilities must sum to 1");
  if (std::abs(mean - 1.0) > 1e-9) throw ConfigError("custom weight law must have mean 1");
  if (std::abs(second - mean * mean - 1.0) > 1e-9) {
    throw ConfigError("custom weight law must have variance 1");
  }
}

WeightLaw parse_weight_law(const std::string& text) {
  WeightLaw law;
  if (text == "exponential") return law;
  if (text == "multinomial") {
    law.kind = WeightLawKind::multinomial;
    return law;
  }
  if (text == "degenerate") {
    law.kind = WeightLawKind::degenerate;
    return law;
  }
  if (text.rfind("custom:", 0) == 0) {
    law.kind = WeightLawKind::custom;
    for (const auto& atom : split(text.substr(7), ',')) {
      const auto at = atom.find('@');
      if (at == std::string::npos) throw ConfigError("custom weight atom '" + atom + "' lacks '@'");
      law.values.push_back(parse_number(atom.substr(0, at)));
      law.probs.push_back(parse_number(atom.substr(at + 1)));
    }
    law.validate();
    return law;
  }
  throw ConfigError("unknown weight law '" + text +
                    "' (expected exponential|multinomial|degenerate|custom:v@p,...)");
}

std::string to_string(const WeightLaw& law) {
  switch (law.kind) {
    case WeightLawKind::exponential:
      return "exponential";
    case WeightLawKind::multinomial:
      return "multinomial";
    case WeightLawKind::degenerate:
      return "degenerate";
    case WeightLawKind::custom: {
      std::ostringstream out;
      out.precision(17);
      out << "custom:";
      for (std::size_t i = 0; i < law.values.size(); ++i) {
        if (i > 0) out << ',';
        out << law.values[i] << '@' << law.probs[i];
      }
      return out.str();
    }
  }
  return "?";
}

std::vector<double> draw_weights(std::size_t n, const WeightLaw& law, rng::Stream& stream) {
  if (n < 1) throw std::invalid_argument("draw_weights needs n >= 1");
  std::vector<double> w(n, 0.0);
  switch (law.kind) {
    case WeightLawKind::exponential:
      for (auto& v : w) v = stream.exponential();
      break;
    case WeightLawKind::multinomial:
      for (std::size_t i = 0; i < n; ++i) w[stream.below(n)] += 1.0;
      break;
    case WeightLawKind::degenerate:
      std::fill(w.begin(), w.end(), 1.0);
      break;
    case WeightLawKind::custom:
      for (auto& v : w) {
        const double u = stream.uniform();
        double cum = 0.0;
        std::size_t k = 0;
        for (; k + 1 < law.probs.size(); ++k) {
          cum += law.probs[k];
          if (u < cum) break;
        }
        v = law.values[k];
      }
      break;
  }
  return w;
}

std::string to_string(SeMethod method) { return method == SeMethod::sd ? "sd" : "iqr"; }

SeMethod parse_se_method(const std::string& text) {
  if (text == "sd") return SeMethod::sd;
  if (text == "iqr") return SeMethod::iqr;
  throw ConfigError("unknown se method '" + text + "' (expected sd|iqr)");
}

BootstrapRun bootstrap_curves(const Pipeline& pipeline, const std::vector<EffectCurve>& estimates,
                              const BootstrapOptions& options, std::uint64_t config_digest) {
  if (options.draws < 2) throw ConfigError("bootstrap needs at least 2 draws");
  options.law.validate();
  if (estimates.size() != pipeline.config().kinds.size()) {
    throw std::invalid_argument("estimates do not match the pipeline's effect kinds");
  }
  const std::size_t n = pipeline.sample_size();
  const std::size_t B = options.draws;
  const double root_n = std::sqrt(static_cast<double>(n));
  const std::size_t per_draw_cap = 4 * B + 1;

  BootstrapRun run;
  run.draws = B;
  run.seed = options.seed;
  run.law = options.law;
  run.n = n;
  run.config_digest = config_digest;
  for (const auto& curve : estimates) {
    CurveDraws cd;
    cd.kind = curve.kind;
    cd.regime = curve.regime;
    cd.points = curve.points;
    cd.z = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(B),
                                 static_cast<Eigen::Index>(curve.points.size()));
    run.curves.push_back(std::move(cd));
  }

  std::vector<std::size_t> attempts(B, 0);
  std::vector<std::vector<std::string>> failures(B);

  auto run_draw = [&](std::size_t b) {
    for (std::size_t a = 0; a < per_draw_cap; ++a) {
      attempts[b] = a + 1;
      rng::Stream stream(options.seed, rng::Domain::bootstrap,
                         (static_cast<std::uint64_t>(a) << 32) | b);
      const auto w = draw_weights(n, options.law, stream);
      try {
        const auto curves = pipeline.compute(w);
        for (std::size_t c = 0; c < curves.size(); ++c) {
          const auto& est = estimates[c].points;
          const auto& got = curves[c].points;
          if (got.size() != est.size()) throw NumericalError("bootstrap curve changed its grid");
          for (std::size_t g = 0; g < est.size(); ++g) {
            if (included(est[g]) && !std::isfinite(got[g].estimate)) {
              throw NumericalError("bootstrap estimate missing at an included grid point");
            }
          }
        }
        for (std::size_t c = 0; c < curves.size(); ++c) {
          const auto& est = estimates[c].points;
          auto row = run.curves[c].z.row(static_cast<Eigen::Index>(b));
          for (std::size_t g = 0; g < est.size(); ++g) {
            row(static_cast<Eigen::Index>(g)) =
                included(est[g]) ? root_n * (curves[c].points[g].estimate - est[g].estimate) : 0.0;
          }
        }
        return;
      } catch (const Error& e) {
        failures[b].push_back("draw " + std::to_string(b) + " attempt " + std::to_string(a) +
                              ": " + e.what());
      }
    }
  };

  unsigned threads = options.threads == 0 ? std::max(1U, std::thread::hardware_concurrency())
                                          : options.threads;
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, B));
  if (threads <= 1) {
    for (std::size_t b = 0; b < B; ++b) run_draw(b);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t b = next++; b < B; b = next++) {
          try {
            run_draw(b);
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

  for (std::size_t b = 0; b < B; ++b) {
    run.attempts += attempts[b];
    for (auto& f : failures[b]) run.failures.push_back(std::move(f));
  }
  if (run.attempts > 5 * B) {
    throw NumericalError("bootstrap needed more than " + std::to_string(5 * B) +
                         " attempts; first failure: " + run.failures.front());
  }
  return run;
}

double empirical_quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("empirical quantile of an empty sample");
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("quantile order must lie in (0, 1]");
  std::sort(values.begin(), values.end());
  // Guard against p * B landing a hair above an integer through rounding.
  const double scaled = p * static_cast<double>(values.size());
  auto k = static_cast<std::size_t>(std::ceil(scaled - 1e-9 * scaled));
  k = std::clamp<std::size_t>(k, 1, values.size());
  return values[k - 1];
}

UniformBand uniform_band(const CurveDraws& draws, std::size_t n, double alpha, SeMethod method,
                         std::size_t min_draws) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  const auto B = static_cast<std::size_t>(draws.z.rows());
  const auto G = static_cast<std::size_t>(draws.z.cols());
  if (B < 2) throw ConfigError("uniform band needs at least 2 draws");
  if (B < min_draws) {
    throw ConfigError("uniform band needs at least " + std::to_string(min_draws) +
                      " draws for its quantile steps, got " + std::to_string(B));
  }
  if (G != draws.points.size()) throw std::invalid_argument("draw matrix does not match the grid");

  UniformBand band;
  band.alpha = alpha;
  band.method = method;
  band.n = n;
  band.sigma.assign(G, 0.0);
  band.point_flags.assign(G, 0);

  std::vector<double> abs_est;
  for (const auto& p : draws.points) {
    if (included(p)) abs_est.push_back(std::abs(p.estimate));
  }
  double scale = abs_est.empty() ? 0.0 : empirical_quantile(abs_est, 0.5);
  if (!(scale > 0.0)) scale = 1.0;
  const double floor = 1e-12 * scale;

  bool all_constant = true;
  for (std::size_t g = 0; g < G; ++g) {
    if (!included(draws.points[g])) {
      band.point_flags[g] |= flags::excluded;
      band.sigma[g] = floor;
      continue;
    }
    const auto col = draws.z.col(static_cast<Eigen::Index>(g));
    if ((col.array() != col(0)).any()) all_constant = false;
    double s = 0.0;
    if (method == SeMethod::sd) {
      const double mean = col.mean();
      s = std::sqrt((col.array() - mean).square().sum() / static_cast<double>(B - 1));
    } else {
      std::vector<double> v(col.data(), col.data() + B);
      s = (empirical_quantile(v, 0.75) - empirical_quantile(v, 0.25)) / kNormalIqr;
    }
    if (!(s >= floor)) {
      s = floor;
      band.point_flags[g] |= flags::se_floored;
    }
    band.sigma[g] = s;
  }

  if (all_constant) {
    band.degenerate = true;
    band.t_crit = 0.0;
    for (auto& f : band.point_flags) f |= flags::degenerate_band;
    return band;
  }

  std::vector<double> t_star(B, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    double sup = 0.0;
    for (std::size_t g = 0; g < G; ++g) {
      if (!included(draws.points[g])) continue;
      sup = std::max(sup, std::abs(draws.z(static_cast<Eigen::Index>(b),
                                           static_cast<Eigen::Index>(g))) / band.sigma[g]);
    }
    t_star[b] = sup;
  }
  band.t_crit = empirical_quantile(std::move(t_star), 1.0 - alpha);
  return band;
}

std::vector<double> pointwise_t_crit(const CurveDraws& draws, const UniformBand& band) {
  const auto B = static_cast<std::size_t>(draws.z.rows());
  std::vector<double> out(draws.points.size(), 0.0);
  if (band.degenerate) return out;
  for (std::size_t g = 0; g < out.size(); ++g) {
    if (!included(draws.points[g])) continue;
    std::vector<double> t(B);
    for (std::size_t b = 0; b < B; ++b) {
      t[b] = std::abs(draws.z(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(g))) /
             band.sigma[g];
    }
    out[g] = empirical_quantile(std::move(t), 1.0 - band.alpha);
  }
  return out;
}

EffectCurve apply_band(EffectCurve curve, const UniformBand& band) {
  if (curve.points.size() != band.sigma.size()) {
    throw std::invalid_argument("band does not match the curve's grid");
  }
  const double root_n = std::sqrt(static_cast<double>(band.n));
  for (std::size_t g = 0; g < curve.points.size(); ++g) {
    auto& p = curve.points[g];
    p.flags |= band.point_flags[g];
    if (!included(p)) continue;
    const double half = band.degenerate ? 0.0 : band.t_crit * band.sigma[g] / root_n;
    p.lower = p.estimate - half;
    p.upper = p.estimate + half;
  }
  std::ostringstream note;
  note << "uniform band: alpha=" << band.alpha << " se=" << to_string(band.method)
       << " t_crit=" << band.t_crit << (band.degenerate ? " (degenerate)" : "");
  curve.notes.push_back(note.str());
  return curve;
}

void to_json(nlohmann::json& j, const BootstrapRun& run) {
  nlohmann::json curves = nlohmann::json::array();
  for (const auto& c : run.curves) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : c.points) {
      auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
      pts.push_back({num(p.x), num(p.x2), num(p.tau), num(p.estimate), p.flags});
    }
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index b = 0; b < c.z.rows(); ++b) {
      std::vector<double> row(static_cast<std::size_t>(c.z.cols()));
      for (Eigen::Index g = 0; g < c.z.cols(); ++g) row[static_cast<std::size_t>(g)] = c.z(b, g);
      rows.push_back(row);
    }
    curves.push_back({{"kind", to_string(c.kind)},
                      {"regime", to_string(c.regime)},
                      {"points", pts},
                      {"draws", rows}});
  }
  j = {{"draws", run.draws},
       {"seed", run.seed},
       {"weight_law", to_string(run.law)},
       {"n", run.n},
       {"attempts", run.attempts},
       {"failures", run.failures},
       {"config_digest", run.config_digest},
       {"curves", curves}};
}

void from_json(const nlohmann::json& j, BootstrapRun& run) {
  try {
    run.draws = j.at("draws").get<std::size_t>();
    run.seed = j.at("seed").get<std::uint64_t>();
    run.law = parse_weight_law(j.at("weight_law").get<std::string>());
    run.n = j.at("n").get<std::size_t>();
    run.attempts = j.at("attempts").get<std::size_t>();
    run.failures = j.at("failures").get<std::vector<std::string>>();
    run.config_digest = j.at("config_digest").get<std::uint64_t>();
    run.curves.clear();
    for (const auto& cj : j.at("curves")) {
      CurveDraws c;
      c.kind = parse_effect_kind(cj.at("kind").get<std::string>());
      const auto regime = cj.at("regime").get<std::string>();
      for (auto r : {Regime::time_homogeneity, Regime::location_scale_time_effects,
                     Regime::conditional_independence, Regime::cross_section}) {
        if (to_string(r) == regime) c.regime = r;
      }
      auto num = [](const nlohmann::json& v) { return v.is_null() ? kNaN : v.get<double>(); };
      for (const auto& pj : cj.at("points")) {
        EffectPoint p;
        p.x = num(pj.at(0));
        p.x2 = num(pj.at(1));
        p.tau = num(pj.at(2));
        p.estimate = num(pj.at(3));
        p.flags = pj.at(4).get<std::uint32_t>();
        c.points.push_back(p);
      }
      const auto& rows = cj.at("draws");
      c.z.resize(static_cast<Eigen::Index>(rows.size()),
                 static_cast<Eigen::Index>(c.points.size()));
      for (std::size_t b = 0; b < rows.size(); ++b) {
        const auto row = rows[b].get<std::vector<double>>();
        if (row.size() != c.points.size()) throw DataError("bootstrap archive row has wrong width");
        for (std::size_t g = 0; g < row.size(); ++g) {
          c.z(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(g)) = row[g];
        }
      }
      run.curves.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed bootstrap archive: ") + e.what());
  }
}

void to_json(nlohmann::json& j, const UniformBand& band) {
  j = {{"alpha", band.alpha},
       {"se_method", to_string(band.method)},
       {"t_crit", band.t_crit},
       {"n", band.n},
       {"degenerate", band.degenerate},
       {"sigma", band.sigma}};
}

}  // namespace stayers
