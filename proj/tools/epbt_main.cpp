#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "epbt/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Evolutionary population-based training with Taylor-expansion losses"};
  app.require_subcommand(1);

  std::string config;
  std::size_t workers = 0;
  bool resume = false;
  auto* run = app.add_subcommand("run", "Run the configured strategy");
  run->add_option("--config", config, "Run configuration file")->required();
  auto* workers_opt =
      run->add_option("--workers", workers, "Concurrent evaluations (default: one per core)");
  run->add_flag("--resume", resume, "Continue from the checkpoint in the output directory");

  std::vector<double> theta;
  std::size_t resolution = 101;
  std::string out_path;
  auto* curve = app.add_subcommand("loss-curve", "Dump the binary projection of a Taylor loss");
  curve->add_option("--theta", theta, "Eight loss parameters")->required();
  curve->add_option("--resolution", resolution, "Number of sample points (>= 2)");
  curve->add_option("--out", out_path, "Output CSV path")->required();

  std::string run_dir;
  std::string id;
  auto* anc = app.add_subcommand("ancestry", "Trace an individual's ancestors");
  anc->add_option("--run", run_dir, "Run output directory")->required();
  anc->add_option("--id", id, "Individual id or 'best'")->required();

  auto* dry = app.add_subcommand("dry-run", "Print evaluation and epoch counts");
  dry->add_option("--config", config, "Run configuration file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? epbt::kExitOk : epbt::kExitConfig;
  }

  if (*run) {
    epbt::RunOptions opts;
    if (*workers_opt) {
      opts.workers = workers;
    }
    opts.resume = resume;
    return epbt::cmd_run(config, opts, std::cout, std::cerr);
  }
  if (*curve) {
    return epbt::cmd_loss_curve(theta, resolution, out_path, std::cout, std::cerr);
  }
  if (*anc) {
    return epbt::cmd_ancestry(run_dir, id, std::cout, std::cerr);
  }
  return epbt::cmd_dry_run(config, std::cout, std::cerr);
}
