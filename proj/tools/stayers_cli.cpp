#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stayers/config.hpp"
#include "stayers/error.hpp"
#include "stayers/run.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> boot;
  std::optional<double> alpha;
  std::optional<std::string> se;
  std::optional<std::string> out;
  std::optional<std::string> input;
  std::optional<std::size_t> n;
  std::optional<std::string> archive;
  std::optional<std::size_t> replications;
  std::vector<std::string> sets;
};

void add_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "key = value configuration file");
  sub->add_option("--seed", f.seed, "master seed for simulation and bootstrap");
  sub->add_option("--boot", f.boot, "bootstrap draws B (0 disables bands)");
  sub->add_option("--alpha", f.alpha, "band level alpha");
  sub->add_option("--se", f.se, "bootstrap scale estimate")->check(CLI::IsMember({"sd", "iqr"}));
  sub->add_option("--out", f.out, "output directory");
  sub->add_option("--input", f.input, "long-format panel CSV (id,t,y,x)");
  sub->add_option("--n", f.n, "units to simulate");
  sub->add_option("--archive", f.archive, "bootstrap archive to recompute bands from");
  sub->add_option("--replications", f.replications, "Monte Carlo replications");
  sub->add_option("--set", f.sets, "override a config key: --set key=value")->take_all();
}

stayers::KeyValues merge(const Flags& f) {
  stayers::KeyValues kv;
  if (!f.config.empty()) kv = stayers::KeyValues::load(f.config);
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw stayers::ConfigError("--set expects key=value, got '" + s + "'");
    kv.set(s.substr(0, eq), s.substr(eq + 1));
  }
  if (f.seed) kv.set("seed", std::to_string(*f.seed));
  if (f.boot) kv.set("bootstrap.draws", std::to_string(*f.boot));
  if (f.alpha) kv.set("bootstrap.alpha", stayers::format_double(*f.alpha));
  if (f.se) kv.set("bootstrap.se", *f.se);
  if (f.out) kv.set("output.dir", *f.out);
  if (f.input) kv.set("input.path", *f.input);
  if (f.n) kv.set("input.n", std::to_string(*f.n));
  if (f.archive) kv.set("bootstrap.archive", *f.archive);
  if (f.replications) kv.set("mc.replications", std::to_string(*f.replications));
  return kv;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stayer mean and quantile effects for two-period panels"};
  app.require_subcommand(1);
  Flags flags;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"simulate", "simulate a panel from a DGP"},
      {"summarize", "descriptive summary of the panel"},
      {"fit-mean", "mean effect, overidentification diagnostic, cross-section comparator"},
      {"fit-quantile", "quantile effects and symmetric diagnostic"},
      {"time-effects", "scale and location time effects and time-averaged effects"},
      {"effects", "effect curves for the configured kinds"},
      {"bands", "uniform bands (bootstrap, or recomputed from --archive)"},
      {"diff-effect", "quantile effects of a transformed outcome"},
      {"cross-section", "per-period cross-section comparator"},
      {"mc", "Monte Carlo bias, SD and band coverage"},
  };
  for (const auto& [name, help] : commands) add_flags(app.add_subcommand(name, help), flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  const stayers::Command command = stayers::parse_command(name);
  stayers::KeyValues kv;
  try {
    kv = merge(flags);
  } catch (const stayers::Error& e) {
    std::cerr << R"({"error":{"category":"config","exit_code":2,"message":)"
              << nlohmann::json(e.what()).dump() << "}}\n";
    return 2;
  }
  return stayers::run_main(command, kv, std::cout, std::cerr);
}
