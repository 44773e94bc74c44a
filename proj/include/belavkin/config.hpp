// belavkin-lab: scenario files -- the strict JSON schema behind the CLI.
//
// A scenario is one JSON object holding the model (kind plus operator
// entries, complex matrices written as row-major [[re, im], ...] arrays),
// the run scale (n or dt, horizon T), seed and replication count, an
// optional experiment block and optional output paths.  Parsing is strict:
// schema_version must match, unknown keys are rejected at every level, and
// every value must have the right shape before any computation starts.
// Structural problems raise ErrorCode::config.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "belavkin/continuous.hpp"
#include "belavkin/discrete.hpp"

namespace belavkin {

// Parsed experiment block.  Which fields are meaningful depends on `name`;
// the parser enforces exactly the keys each experiment needs.
struct ExperimentSpec {
  std::string name;  // mean_convergence, weak_marginal, martingale,
                     // residual_order, robustness, deviation
  std::vector<long long> ns;        // mean_convergence resolution sweep
  long long n = 0;                  // weak_marginal / martingale level
  double dt = 0.0;                  // weak_marginal / robustness / deviation
  std::string residual_experiment;  // residual_order variant
  std::vector<long long> sweep;     // residual_order sweep
  std::vector<double> eps_list;     // robustness / deviation
  double alpha = 0.0;               // deviation exponent, in [0, 0.5)
};

struct ScenarioConfig {
  int schema_version = 0;

  // Model block.  `model` carries whatever operator entries the file gave;
  // the has_* flags say which ones, so each command can demand exactly what
  // it needs (see materialize_model).
  ModelConfig model;
  bool has_kind = false;
  bool has_h0 = false;
  bool has_c = false;
  bool has_c_pair = false;  // C_plus and C_minus (both or neither)
  bool has_kraus = false;
  bool has_eps = false;
  bool has_gamma = false;
  bool has_hamiltonian = false;
  bool has_observable = false;
  bool has_rho0 = false;

  // Scale and run parameters.
  long long n = 0;
  bool has_n = false;
  double dt = 0.0;
  bool has_dt = false;
  double t_final = 1.0;
  std::uint64_t seed = 1;
  long long replications = 1;

  // Continuous-equation selector for the integrate command: one of master,
  // averaged, channel, volterra_det (deterministic) or belavkin,
  // alternating, noise, volterra_lift (stochastic).
  std::string equation;
  bool has_equation = false;
  TraceForm trace_form = TraceForm::literal;
  bool renormalize = false;
  bool repair = false;
  int store_stride = 1;

  ExperimentSpec experiment;
  bool has_experiment = false;

  // Output path overrides (resolved relative to --out-dir when relative).
  std::string out_csv, out_json, out_text;
};

// Parses and validates a scenario from JSON text / from a file on disk.
ScenarioConfig parse_scenario(const std::string& json_text);
ScenarioConfig load_scenario(const std::string& path);

// Assembles the full ModelConfig for model-consuming commands: fills the
// defaults (H0 = 0, observable preset by kind, rho0 = ket0), checks that the
// kind's required operator entries were given, and copies the scenario's n
// when present (1 otherwise; sweeps override it per level).
ModelConfig materialize_model(const ScenarioConfig& scenario);

// Named presets, also used by materialize_model: observable "pauli_x" /
// "dft4", initial state "ket0" / "mixed".
Mat observable_preset(const std::string& name);
Mat rho0_preset(const std::string& name);

}  // namespace belavkin
