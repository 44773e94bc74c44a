// belavkin-lab: command dispatch behind the CLI.
//
// `run` executes one command against a scenario file and returns the process
// exit code.  It is callable in-process (the tests capture the streams) and
// from the CLI main, which only parses flags and forwards them here.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

namespace belavkin {

struct RunOptions {
  std::string command;  // validate | constants | simulate | integrate | experiment
  std::string config_path;
  std::string out_dir = ".";
  bool deterministic = false;  // suppress timestamps, zero wall-clock fields
  bool quiet = false;
  std::uint64_t seed = 0;  // --seed override of the scenario seed
  bool seed_set = false;
  int threads = 0;  // --threads override; else BELAVKIN_LAB_THREADS, else 1
  bool threads_set = false;
  std::ostream* out = nullptr;  // defaults to std::cout
  std::ostream* err = nullptr;  // defaults to std::cerr; structured JSON errors
};

// Exit codes: 0 success; 2 validation-class error (bad config, failed model
// assumption); 3 model degeneracy or integrator divergence; 4 experiment
// whose checks all pass but at least one is inconclusive; 5 experiment with
// failing checks.
int run(const RunOptions& options);

// Worker count: the --threads flag when given, else BELAVKIN_LAB_THREADS
// when it parses to a positive integer, else 1.
int resolve_threads(const RunOptions& options);

}  // namespace belavkin
