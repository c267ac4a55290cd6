#include <CLI11.hpp>

#include <iostream>

#include "mmfl/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Federated transfer learning simulator for paired image/audio data"};
  app.require_subcommand(1);

  mmfl::RunOptions run;
  std::string out_dir;
  std::uint64_t seed = 0;
  auto* run_cmd = app.add_subcommand("run", "Run one experiment described by a config file");
  run_cmd->add_option("config", run.config, "Experiment config (INI)")->required();
  auto* out_opt = run_cmd->add_option("--out", out_dir, "Output directory (default: config, then $MMFL_OUTPUT_DIR)");
  auto* seed_opt = run_cmd->add_option("--seed", seed, "Run a single seed instead of the configured list");
  run_cmd->add_flag("-v,--verbose", run.verbose, "Print progress and final accuracies");

  std::string report_a, report_b;
  auto* compare_cmd = app.add_subcommand("compare", "Compare the final accuracies of two reports");
  compare_cmd->add_option("a", report_a, "Baseline report.json")->required();
  compare_cmd->add_option("b", report_b, "Candidate report.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : mmfl::kExitUsage;
  }

  if (*run_cmd) {
    if (*out_opt) run.output_dir = out_dir;
    if (*seed_opt) run.seed = seed;
    return mmfl::run_command(run, std::cout, std::cerr);
  }
  return mmfl::compare_command(report_a, report_b, std::cout, std::cerr);
}
