#include "stayers/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "stayers/error.hpp"
#include "stayers/rng.hpp"

namespace stayers {

namespace {

struct UnitDraw {
  double x1 = 0.0;
  double x2 = 0.0;
  double a = 0.0;
  double eta = 0.0;
  double v[2][2] = {{0.0, 0.0}, {0.0, 0.0}};  // [period][component]
};

// Every unit consumes the same number of variates so substream layouts do
// not depend on parameter values.
UnitDraw draw_unit(const DgpSpec& spec, rng::Stream& s) {
  const auto& law = spec.regressors;
  UnitDraw u;
  u.x1 = law.mean + law.sd * s.normal();
  const bool stayer = s.uniform() < law.stayer_prob;
  const double change = law.change_sd * s.normal();
  u.x2 = stayer ? u.x1 : u.x1 + change;
  const double eps = s.normal();
  u.eta = s.normal();
  for (auto& period : u.v) {
    for (auto& component : period) component = s.normal();
  }
  double link = 0.0;
  switch (spec.link) {
    case HeterogeneityLink::period_average:
      link = 0.5 * (u.x1 + u.x2);
      break;
    case HeterogeneityLink::first_period:
      link = u.x1;
      break;
    case HeterogeneityLink::independent:
      break;
  }
  u.a = spec.rho * link + spec.sd_a * eps;
  return u;
}

DgpFamily core_family(const DgpSpec& spec) {
  return spec.family == DgpFamily::location_scale ? spec.inner : spec.family;
}

double beta2(const DgpSpec& spec, const UnitDraw& u, int t) {
  if (core_family(spec) == DgpFamily::additive_linear) return spec.additive.theta;
  const auto& rc = spec.random_coefficient;
  return rc.b2_mean + rc.b2_a * u.a + rc.sd_eta * u.eta + rc.sd_v2 * u.v[t][1];
}

double phi(const DgpSpec& spec, double x, const UnitDraw& u, int t) {
  if (core_family(spec) == DgpFamily::additive_linear) {
    return spec.additive.theta * x + u.a + spec.additive.sd_v * u.v[t][0];
  }
  return u.a + spec.random_coefficient.sd_v1 * u.v[t][0] + beta2(spec, u, t) * x;
}

struct TimeTerms {
  double dmu_bar = 0.0;
  double dsigma_bar = 0.0;
  double sigma_bar = 1.0;
};

TimeTerms time_terms(const DgpSpec& spec, double x) {
  if (spec.family != DgpFamily::location_scale) return {};
  return {0.5 * (spec.mu1.slope + spec.mu2.slope), 0.5 * (spec.sigma1.slope + spec.sigma2.slope),
          0.5 * (spec.sigma1(x) + spec.sigma2(x))};
}

double link_on_diagonal(const DgpSpec& spec, double x) {
  return spec.link == HeterogeneityLink::independent ? 0.0 : x;
}

double quantile_of(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double sd_of(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double e : v) ss += (e - mean) * (e - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

struct OracleObs {
  double phi;
  double dphi;
};

}  // namespace

void DgpSpec::validate() const {
  const auto& law = regressors;
  if (!(law.sd > 0.0) || !(law.change_sd >= 0.0)) {
    throw ConfigError("regressor scales must be positive");
  }
  if (!(law.stayer_prob >= 0.0 && law.stayer_prob <= 1.0)) {
    throw ConfigError("stayer probability must lie in [0, 1]");
  }
  if (!(sd_a >= 0.0) || !(additive.sd_v >= 0.0) || !(random_coefficient.sd_v1 >= 0.0) ||
      !(random_coefficient.sd_eta >= 0.0) || !(random_coefficient.sd_v2 >= 0.0)) {
    throw ConfigError("noise scales must be nonnegative");
  }
  if (family == DgpFamily::location_scale && inner == DgpFamily::location_scale) {
    throw ConfigError("location-scale inner family must be additive-linear or random-coefficient");
  }
  for (double v : {rho, sd_a, additive.theta, random_coefficient.b2_mean, random_coefficient.b2_a,
                   mu1.intercept, mu1.slope, mu2.intercept, mu2.slope, sigma1.intercept,
                   sigma1.slope, sigma2.intercept, sigma2.slope, law.mean}) {
    if (!std::isfinite(v)) throw ConfigError("DGP parameters must be finite");
  }
}

std::string to_string(DgpFamily family) {
  switch (family) {
    case DgpFamily::additive_linear:
      return "additive-linear";
    case DgpFamily::random_coefficient:
      return "random-coefficient";
    case DgpFamily::location_scale:
      return "location-scale";
  }
  return "?";
}

DgpFamily parse_dgp_family(const std::string& text) {
  for (auto f : {DgpFamily::additive_linear, DgpFamily::random_coefficient,
                 DgpFamily::location_scale}) {
    if (text == to_string(f)) return f;
  }
  throw ConfigError("unknown DGP family '" + text +
                    "' (expected additive-linear|random-coefficient|location-scale)");
}

std::string to_string(HeterogeneityLink link) {
  switch (link) {
    case HeterogeneityLink::period_average:
      return "period-average";
    case HeterogeneityLink::first_period:
      return "first-period";
    case HeterogeneityLink::independent:
      return "independent";
  }
  return "?";
}

HeterogeneityLink parse_heterogeneity_link(const std::string& text) {
  for (auto l : {HeterogeneityLink::period_average, HeterogeneityLink::first_period,
                 HeterogeneityLink::independent}) {
    if (text == to_string(l)) return l;
  }
  throw ConfigError("unknown heterogeneity link '" + text +
                    "' (expected period-average|first-period|independent)");
}

std::string to_string(TruthKind kind) {
  switch (kind) {
    case TruthKind::mean:
      return "mean";
    case TruthKind::quantile:
      return "quantile";
    case TruthKind::time_averaged_mean:
      return "time-averaged-mean";
    case TruthKind::time_averaged_quantile:
      return "time-averaged-quantile";
  }
  return "?";
}

DgpSpec dgp_from_config(const KeyValues& kv) {
  DgpSpec s;
  s.family = parse_dgp_family(kv.get_string("dgp.family", to_string(s.family)));
  s.inner = parse_dgp_family(kv.get_string("dgp.inner", to_string(s.inner)));
  s.link = parse_heterogeneity_link(kv.get_string("dgp.link", to_string(s.link)));
  s.regressors.mean = kv.get_double("dgp.x_mean", s.regressors.mean);
  s.regressors.sd = kv.get_double("dgp.x_sd", s.regressors.sd);
  s.regressors.stayer_prob = kv.get_double("dgp.stayer_prob", s.regressors.stayer_prob);
  s.regressors.change_sd = kv.get_double("dgp.change_sd", s.regressors.change_sd);
  s.rho = kv.get_double("dgp.rho", s.rho);
  s.sd_a = kv.get_double("dgp.sd_a", s.sd_a);
  s.additive.theta = kv.get_double("dgp.theta", s.additive.theta);
  s.additive.sd_v = kv.get_double("dgp.sd_v", s.additive.sd_v);
  auto& rc = s.random_coefficient;
  rc.sd_v1 = kv.get_double("dgp.rc.sd_v1", rc.sd_v1);
  rc.b2_mean = kv.get_double("dgp.rc.b2_mean", rc.b2_mean);
  rc.b2_a = kv.get_double("dgp.rc.b2_a", rc.b2_a);
  rc.sd_eta = kv.get_double("dgp.rc.sd_eta", rc.sd_eta);
  rc.sd_v2 = kv.get_double("dgp.rc.sd_v2", rc.sd_v2);
  auto affine = [&](const std::string& name, Affine& f) {
    f.intercept = kv.get_double("dgp." + name + ".intercept", f.intercept);
    f.slope = kv.get_double("dgp." + name + ".slope", f.slope);
  };
  affine("mu1", s.mu1);
  affine("mu2", s.mu2);
  affine("sigma1", s.sigma1);
  affine("sigma2", s.sigma2);
  s.validate();
  return s;
}

void dgp_to_config(const DgpSpec& s, KeyValues& kv) {
  kv.set("dgp.family", to_string(s.family));
  kv.set("dgp.inner", to_string(s.inner));
  kv.set("dgp.link", to_string(s.link));
  kv.set("dgp.x_mean", format_double(s.regressors.mean));
  kv.set("dgp.x_sd", format_double(s.regressors.sd));
  kv.set("dgp.stayer_prob", format_double(s.regressors.stayer_prob));
  kv.set("dgp.change_sd", format_double(s.regressors.change_sd));
  kv.set("dgp.rho", format_double(s.rho));
  kv.set("dgp.sd_a", format_double(s.sd_a));
  kv.set("dgp.theta", format_double(s.additive.theta));
  kv.set("dgp.sd_v", format_double(s.additive.sd_v));
  const auto& rc = s.random_coefficient;
  kv.set("dgp.rc.sd_v1", format_double(rc.sd_v1));
  kv.set("dgp.rc.b2_mean", format_double(rc.b2_mean));
  kv.set("dgp.rc.b2_a", format_double(rc.b2_a));
  kv.set("dgp.rc.sd_eta", format_double(rc.sd_eta));
  kv.set("dgp.rc.sd_v2", format_double(rc.sd_v2));
  auto affine = [&](const std::string& name, const Affine& f) {
    kv.set("dgp." + name + ".intercept", format_double(f.intercept));
    kv.set("dgp." + name + ".slope", format_double(f.slope));
  };
  affine("mu1", s.mu1);
  affine("mu2", s.mu2);
  affine("sigma1", s.sigma1);
  affine("sigma2", s.sigma2);
}

PanelDataset simulate(const DgpSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n < 2) throw ConfigError("simulate needs n >= 2");
  PanelDataset data;
  data.unit_id.reserve(n);
  data.y1.reserve(n);
  data.y2.reserve(n);
  data.x1.reserve(n);
  data.x2.reserve(n);
  const bool ls = spec.family == DgpFamily::location_scale;
  for (std::size_t i = 0; i < n; ++i) {
    rng::Stream stream(seed, rng::Domain::simulation, i);
    const UnitDraw u = draw_unit(spec, stream);
    const double xs[2] = {u.x1, u.x2};
    double ys[2];
    for (int t = 0; t < 2; ++t) {
      const double core = phi(spec, xs[t], u, t);
      if (ls) {
        const Affine& mu = t == 0 ? spec.mu1 : spec.mu2;
        const Affine& sigma = t == 0 ? spec.sigma1 : spec.sigma2;
        ys[t] = mu(xs[t]) + sigma(xs[t]) * core;
      } else {
        ys[t] = core;
      }
    }
    data.unit_id.push_back(std::to_string(i + 1));
    data.x1.push_back(u.x1);
    data.x2.push_back(u.x2);
    data.y1.push_back(ys[0]);
    data.y2.push_back(ys[1]);
  }
  return data;
}

double true_sigma(const DgpSpec& spec, double x) {
  if (spec.family != DgpFamily::location_scale) return 1.0;
  return spec.sigma2(x) / spec.sigma1(x);
}

double true_shift(const DgpSpec& spec, double x) {
  if (spec.family != DgpFamily::location_scale) return 0.0;
  return spec.mu2(x) - true_sigma(spec, x) * spec.mu1(x);
}

OracleResult true_effect(const DgpSpec& spec, double x, TruthKind kind, double tau,
                         const OracleOptions& options) {
  spec.validate();
  if (!std::isfinite(x)) throw std::invalid_argument("oracle point must be finite");
  const bool quantile = kind == TruthKind::quantile || kind == TruthKind::time_averaged_quantile;
  if (quantile && !(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must lie in (0, 1)");
  const bool time_averaged =
      kind == TruthKind::time_averaged_mean || kind == TruthKind::time_averaged_quantile;
  if (spec.family == DgpFamily::location_scale && !time_averaged) {
    throw ConfigError("location-scale designs define only time-averaged effects");
  }
  const TimeTerms tt = time_terms(spec, x);

  OracleResult result;
  if (core_family(spec) == DgpFamily::additive_linear) {
    const double theta = spec.additive.theta;
    const double mean_phi = theta * x + spec.rho * link_on_diagonal(spec, x);
    const double sd_phi = std::hypot(spec.sd_a, spec.additive.sd_v);
    double level = mean_phi;
    if (quantile) {
      level += sd_phi * boost::math::quantile(boost::math::normal(), tau);
    }
    result.value = tt.dmu_bar + tt.dsigma_bar * level + tt.sigma_bar * theta;
    result.closed_form = true;
    return result;
  }

  if (options.groups < 2) throw ConfigError("oracle needs at least 2 subsample groups");
  const std::size_t N = options.n_oracle;
  double sx = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    rng::Stream stream(options.seed, rng::Domain::oracle, i);
    const UnitDraw u = draw_unit(spec, stream);
    sx += u.x1 + u.x2;
    sxx += u.x1 * u.x1 + u.x2 * u.x2;
  }
  const double m = 2.0 * static_cast<double>(N);
  const double sd_x = std::sqrt(std::max(0.0, (sxx - sx * sx / m) / (m - 1.0)));
  const double h = std::pow(static_cast<double>(N), -0.2) * sd_x;

  std::vector<std::vector<OracleObs>> groups(options.groups);
  std::size_t retained = 0;
  for (std::size_t i = 0; i < N; ++i) {
    rng::Stream stream(options.seed, rng::Domain::oracle, i);
    const UnitDraw u = draw_unit(spec, stream);
    if (std::abs(u.x1 - x) > h || std::abs(u.x2 - x) > h) continue;
    ++retained;
    for (int t = 0; t < 2; ++t) {
      groups[i % options.groups].push_back({phi(spec, x, u, t), beta2(spec, u, t)});
    }
  }
  if (retained < options.min_retained) {
    throw ConfigError("oracle retained " + std::to_string(retained) + " units near x = " +
                      std::to_string(x) + " (need " + std::to_string(options.min_retained) +
                      "); increase the oracle sample size");
  }

  double h_q = 0.0;
  std::vector<OracleObs> all;
  for (const auto& g : groups) all.insert(all.end(), g.begin(), g.end());
  if (quantile) {
    std::vector<double> phis;
    for (const auto& o : all) phis.push_back(o.phi);
    h_q = std::pow(static_cast<double>(phis.size()), -0.2) * sd_of(phis);
  }

  auto estimate = [&](const std::vector<OracleObs>& obs, std::size_t min_local) {
    if (!quantile) {
      double s_phi = 0.0;
      double s_d = 0.0;
      for (const auto& o : obs) {
        s_phi += o.phi;
        s_d += o.dphi;
      }
      const double k = static_cast<double>(obs.size());
      return tt.dmu_bar + tt.dsigma_bar * s_phi / k + tt.sigma_bar * s_d / k;
    }
    std::vector<double> phis;
    for (const auto& o : obs) phis.push_back(o.phi);
    const double q = quantile_of(phis, tau);
    double s_d = 0.0;
    std::size_t local = 0;
    for (const auto& o : obs) {
      if (std::abs(o.phi - q) <= h_q) {
        s_d += o.dphi;
        ++local;
      }
    }
    if (local < min_local) {
      throw ConfigError("oracle kept " + std::to_string(local) +
                        " observations near the conditional quantile; increase the oracle "
                        "sample size");
    }
    return tt.dmu_bar + tt.dsigma_bar * q + tt.sigma_bar * s_d / static_cast<double>(local);
  };

  result.value = estimate(all, options.min_retained);
  std::vector<double> group_values;
  for (const auto& g : groups) group_values.push_back(estimate(g, 2));
  result.standard_error = sd_of(group_values) / std::sqrt(static_cast<double>(groups.size()));
  result.n_oracle = N;
  result.stayer_bandwidth = h;
  result.quantile_bandwidth = h_q;
  result.retained = retained;
  return result;
}

}  // namespace stayers
