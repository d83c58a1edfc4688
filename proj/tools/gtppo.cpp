#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gtppo/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"gtppo: pedestrian trajectory prediction experiments"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::string> dataset, output;
  std::optional<double> dt;
  std::optional<std::uint64_t> seed;
  gtppo::CommandOptions opts;

  app.add_option("-c,--config", config_path, "JSON run configuration (empty: all defaults)");
  app.add_option("--dataset", dataset, "dataset format: ethucy, sdd or synthetic");
  app.add_option("--dt", dt, "seconds per step after down-sampling");
  app.add_option("-o,--output", output, "output directory");
  app.add_option("--seed", seed, "base random seed");
  app.add_option("--checkpoint", opts.checkpoint, "checkpoint to load (eval, sweep, density)");
  app.add_flag("--single-thread", opts.single_thread, "evaluate on one thread");
  app.add_flag("-q,--quiet", opts.quiet, "suppress progress output");

  for (const auto& verb : gtppo::command_verbs()) app.add_subcommand(verb);
  app.fallthrough();

  CLI11_PARSE(app, argc, argv);

  gtppo::RunConfig cfg;
  try {
    cfg = config_path.empty() ? gtppo::config_from_json(nlohmann::json::object()) : gtppo::load_config(config_path);
    if (dataset) cfg.dataset.format = gtppo::dataset_kind_from_string(*dataset);
    if (dt) {
      if (!(*dt > 0.0)) throw gtppo::ConfigError("--dt must be positive");
      cfg.dataset.dt = *dt;
    }
    if (output) cfg.output_dir = *output;
    if (seed) cfg.seed = cfg.train.seed = *seed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return gtppo::run_command(app.get_subcommands().front()->get_name(), cfg, opts);
}
