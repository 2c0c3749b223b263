#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "sbd/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Simulation-based decision making"};
  app.require_subcommand(1);

  std::string config, run_dir, problem, out_path, data_dir = SBD_DATA_DIR;

  auto* run = app.add_subcommand("run", "Run the decision engine for a config");
  run->add_option("config", config, "Config file (JSON)")->required();

  auto* baseline = app.add_subcommand("baseline", "Monte-Carlo + differential-evolution baseline on a finished run");
  baseline->add_option("config", config, "Config file (JSON)")->required();
  baseline->add_option("--run-dir", run_dir, "Run directory holding the trained posterior")->required();

  auto* report = app.add_subcommand("report", "Write plot-ready CSV bundles for a run");
  report->add_option("run_dir", run_dir, "Run directory")->required();

  auto* oracle = app.add_subcommand("oracle", "Compute and cache the reference optimal action");
  oracle->add_option("problem", problem, "warehouse or deer")->required();
  oracle->add_option("--run-dir", run_dir, "Run directory with a trained posterior (deer)");
  oracle->add_option("--out", out_path, "Where to write the reference JSON");

  auto* fixtures = app.add_subcommand("fixtures", "Regenerate the observed-data fixtures");
  fixtures->add_option("--data-dir", data_dir, "Target directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : sbd::kExitConfig;
  }

  if (*run) return sbd::cmd_run(config, std::cout, std::cerr);
  if (*baseline) return sbd::cmd_baseline(config, run_dir, std::cout, std::cerr);
  if (*report) return sbd::cmd_report(run_dir, std::cout, std::cerr);
  if (*oracle) return sbd::cmd_oracle(problem, run_dir, out_path, std::cout, std::cerr);
  return sbd::cmd_fixtures(data_dir, std::cout, std::cerr);
}
