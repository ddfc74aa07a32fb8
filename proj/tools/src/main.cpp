#include <cstdint>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"

// Marketplace simulator front end. Three commands:
//   run    CONFIG     — execute one experiment (all repeats), write traces,
//                       metrics.csv and summary.json, print a one-line summary
//   sweep  SPEC       — execute a grid of config cells, write grid.csv
//   report INPUTS...  — turn grid.csv / summary.json files into SVG plots
int main(int argc, char** argv) {
  using namespace gradmarket::cli;

  CLI::App app{"deterministic gradient-marketplace simulator"};
  app.require_subcommand(1);

  CommonOptions opts;
  std::string config_path;
  std::string spec_path;
  std::vector<std::string> report_inputs;
  std::uint64_t seed_value = 0;

  auto add_common = [&](CLI::App* cmd, bool with_seed) {
    cmd->add_option("--set", opts.overrides, "config override key=value (repeatable)");
    cmd->add_option("--out", opts.out_dir, "output directory")->capture_default_str();
    cmd->add_option("--jobs", opts.jobs, "worker thread count")
        ->check(CLI::PositiveNumber);
    if (with_seed) {
      cmd->add_option("--seed", seed_value, "master seed (overrides the config)");
    }
  };

  CLI::App* run = app.add_subcommand("run", "run one experiment");
  run->add_option("config", config_path, "experiment config (YAML)")->required();
  add_common(run, true);

  CLI::App* sweep = app.add_subcommand("sweep", "run a config grid");
  sweep->add_option("spec", spec_path, "sweep spec (YAML)")->required();
  add_common(sweep, true);

  CLI::App* report = app.add_subcommand("report", "plot grid.csv / summary.json files");
  report->add_option("inputs", report_inputs, "grid.csv or summary.json paths")
      ->required();
  report->add_option("--out", opts.out_dir, "output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfigError;
  }

  for (CLI::App* cmd : {run, sweep, report}) {
    if (cmd->parsed() && cmd->count("--out") > 0) opts.out_given = true;
  }
  // GRADMARKET_OUT replaces the built-in default; an explicit --out (or a
  // sweep spec's own `out`) still wins.
  if (const char* env_out = std::getenv("GRADMARKET_OUT");
      env_out != nullptr && *env_out != '\0' && !opts.out_given) {
    opts.out_dir = env_out;
  }

  if (run->parsed()) {
    if (run->count("--seed") > 0) opts.seed = seed_value;
    return cmd_run(config_path, opts);
  }
  if (sweep->parsed()) {
    if (sweep->count("--seed") > 0) opts.seed = seed_value;
    return cmd_sweep(spec_path, opts);
  }
  return cmd_report(report_inputs, opts.out_dir);
}
