// twocurve: optimal designs and confidence bands for comparing two regression
// curves observed under correlated Brownian errors.
//
//   twocurve optimize --config scenario.json --out results/
//   twocurve reproduce-tables --config configs/reference --out results/
//   twocurve bands --config scenario.json --out results/
//   twocurve evaluate --config scenario.json --format json
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <cstdint>
#include <exception>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "twocurve/app.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Flags {
  std::string config;
  std::string out = ".";
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string format = "csv";
};

void add_common(CLI::App* cmd, Flags& f, const std::string& config_help) {
  cmd->add_option("--config", f.config, config_help)->required();
  cmd->add_option("--out", f.out, "output directory")->capture_default_str();
  cmd->add_option("--seed", f.seed, "master seed (overrides the config)");
  cmd->add_option("--threads", f.threads, "worker threads, 0 = all cores")->capture_default_str();
  cmd->add_option("--format", f.format, "output format")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal designs for comparing two regression curves"};
  app.set_version_flag("--version", std::string(twocurve::kToolVersion));
  app.require_subcommand(1);

  Flags flags;
  std::map<std::string, CLI::App*> cmds;
  cmds["optimize"] = app.add_subcommand("optimize", "optimize the design points of one scenario");
  cmds["reproduce-tables"] =
      app.add_subcommand("reproduce-tables", "run every scenario in a directory against its reference values");
  cmds["bands"] = app.add_subcommand("bands", "averaged confidence bands for the optimal and uniform designs");
  cmds["evaluate"] = app.add_subcommand("evaluate", "criterion value of the configured (or uniform) design");
  for (auto& [name, cmd] : cmds)
    add_common(cmd, flags, name == "reproduce-tables" ? "directory of scenario files" : "scenario file (JSON)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  twocurve::RunOptions opt;
  opt.out_dir = flags.out;
  opt.format = flags.format == "json" ? twocurve::OutputFormat::json : twocurve::OutputFormat::csv;
  opt.threads = twocurve::resolve_threads(flags.threads);
  opt.log = &std::cout;
  for (auto& [name, cmd] : cmds)
    if (cmd->parsed() && cmd->get_option("--seed")->count() > 0) opt.seed = flags.seed;

  try {
    twocurve::RunReport report;
    if (cmds["reproduce-tables"]->parsed()) {
      report = twocurve::run_reproduce_tables(flags.config, opt);
      std::cout << (report.all_pass ? "all scenarios within tolerance" : "some scenarios outside tolerance") << "\n";
    } else {
      const twocurve::ScenarioConfig cfg = twocurve::load_scenario(flags.config);
      if (cmds["optimize"]->parsed())
        report = twocurve::run_optimize(cfg, opt);
      else if (cmds["bands"]->parsed())
        report = twocurve::run_bands(cfg, opt);
      else
        report = twocurve::run_evaluate(cfg, opt);
    }
    for (const auto& f : report.files) std::cout << "wrote " << f << "\n";
  } catch (const twocurve::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const twocurve::numerical_error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return 0;
}
