// qfriction <subcommand> --config <path> [--out <dir>] [--seed <u64>]

#include "CLI11.hpp"

#include <iostream>

#include "qfriction/cli/commands.hpp"

int main(int argc, char** argv) {
  using namespace qfriction::cli;
  CLI::App app{"Translation-invariant quantum friction: build, evolve and certify Lindblad models.\n"
               "Units: hbar = kB = 1 unless the config overrides them.\n"
               "Environment: QFRICTION_THREADS sets the number of concurrent sweep points."};
  app.require_subcommand(1);
  std::string config, out;
  std::uint64_t seed = 0;
  bool seed_given = false;
  auto add = [&](const char* name, const char* help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "JSON run configuration")->required();
    sub->add_option("--out", out, "output directory (default: output.dir from the config)");
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& s) { seed = s, seed_given = true; }, "random seed (default: config seed)");
  };
  add("model", "emit the Hamiltonian spectrum summary");
  add("evolve", "integrate the master equation and write trajectory.csv");
  add("check", "evaluate the thermalization and translation-invariance criteria");
  add("steady", "Liouvillian kernel states and spectral gap");
  add("forces", "friction and position force operators and their expectations");
  add("sweep", "repeat a subcommand over the config's sweep grid");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  RunConfig cfg;
  try {
    cfg = load_config(config);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  if (out.empty()) out = cfg.output.dir;
  return run_command(command, cfg, out, seed_given ? seed : cfg.seed, std::cout, std::cerr);
}
