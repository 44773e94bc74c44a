// belavkin-lab CLI: flag parsing only; all work happens in belavkin::run.

#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "belavkin/runner.hpp"
#include "json.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "belavkin-lab: repeated-measurement trajectory models and their continuous limits"};
  app.require_subcommand(1);
  app.fallthrough();

  belavkin::RunOptions options;
  std::uint64_t seed = 0;
  int threads = 0;
  CLI::Option* seed_opt =
      app.add_option("--seed", seed, "Master seed (overrides the scenario's seed)");
  CLI::Option* threads_opt = app.add_option(
      "--threads", threads, "Worker threads for replications (else BELAVKIN_LAB_THREADS, else 1)");
  app.add_option("--out-dir", options.out_dir, "Directory output files are written to");
  app.add_flag("--deterministic", options.deterministic,
               "Byte-reproducible outputs: no timestamps, wall-clock fields zeroed");
  app.add_flag("--quiet", options.quiet, "Suppress human-readable stdout output");

  const struct {
    const char* name;
    const char* help;
  } kCommands[] = {
      {"validate", "Check a scenario file and its model assumptions; no computation"},
      {"constants", "Derive and dump the measurement constants of the scenario's observable"},
      {"simulate", "Run discrete trajectories and write them as CSV/JSON"},
      {"integrate", "Integrate a limit ODE/SDE and write the path as CSV/JSON"},
      {"experiment", "Run a convergence experiment and write its report"},
  };
  for (const auto& c : kCommands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("config", options.config_path, "Scenario JSON file")->required();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    nlohmann::json j;
    j["error"] = {{"code", "config"}, {"message", e.what()}};
    std::cerr << j.dump() << "\n";
    return 2;
  }

  options.command = app.get_subcommands().front()->get_name();
  options.seed = seed;
  options.seed_set = seed_opt->count() > 0;
  options.threads = threads;
  options.threads_set = threads_opt->count() > 0;
  return belavkin::run(options);
}
