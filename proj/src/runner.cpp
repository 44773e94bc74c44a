#include "belavkin/runner.hpp"

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "belavkin/config.hpp"
#include "belavkin/continuous.hpp"
#include "belavkin/discrete.hpp"
#include "belavkin/errors.hpp"
#include "belavkin/harness.hpp"
#include "belavkin/serialize.hpp"
#include "json.hpp"

namespace belavkin {
namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

[[noreturn]] void fail_config(const std::string& msg) { throw Error(ErrorCode::config, msg); }

std::string iso_timestamp_utc() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path resolve_path(const std::string& override_path, const char* fallback,
                      const std::string& out_dir) {
  fs::path p = override_path.empty() ? fs::path(fallback) : fs::path(override_path);
  if (p.is_relative()) p = fs::path(out_dir) / p;
  return p;
}

// trajectory.csv -> trajectory_3.csv when several replications are written.
fs::path with_index(fs::path p, long long index, long long total) {
  if (total <= 1) return p;
  const fs::path ext = p.extension();
  p.replace_extension();
  p += "_" + std::to_string(index);
  p += ext;
  return p;
}

void write_file(const fs::path& path, const std::string& content) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_config("cannot write output file: " + path.string());
  out << content;
  if (!out) fail_config("failed while writing: " + path.string());
}

// Matrix as the row-major [re, im] pair list scenario files use.
ordered_json matrix_json(const Mat& m) {
  ordered_json arr = ordered_json::array();
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      arr.push_back(ordered_json::array({m(i, j).real(), m(i, j).imag()}));
    }
  }
  return arr;
}

Mat initial_state(const ScenarioConfig& s) {
  return s.has_rho0 ? s.model.rho0 : rho0_preset("ket0");
}

// Fingerprint of the scenario's model block with the same defaults
// materialize_model fills in; used by the commands that never build a full
// discrete model so that every output file still names its model.
std::uint64_t scenario_digest(const ScenarioConfig& s) {
  ModelConfig m = s.model;
  m.n = s.has_n ? static_cast<int>(s.n) : 1;
  if (!s.has_h0) m.h0 = Mat::zero(2, 2);
  if (!s.has_observable) {
    const bool is_noise = s.has_kind && m.kind == ModelKind::noise;
    m.observable = is_noise ? observable_preset("dft4") : observable_preset("pauli_x");
  }
  if (!s.has_rho0) m.rho0 = rho0_preset("ket0");
  return model_digest(m);
}

bool model_based_experiment(const std::string& name) {
  return name == "mean_convergence" || name == "weak_marginal" || name == "martingale";
}

// The model-free experiments run on fixed internal benchmarks; their outputs
// carry the digest of the benchmark they exercise.
std::uint64_t experiment_digest(const ScenarioConfig& s) {
  const ExperimentSpec& e = s.experiment;
  if (model_based_experiment(e.name)) return model_digest(materialize_model(s));
  ModelKind kind = ModelKind::single;
  if (e.name == "robustness" || e.name == "deviation" ||
      e.residual_experiment == "increment_noise") {
    kind = ModelKind::noise;
  } else if (e.residual_experiment == "increment_alternating") {
    kind = ModelKind::alternating;
  } else if (e.residual_experiment == "increment_memory") {
    kind = ModelKind::memory_reset;
  }
  return model_digest(benchmark_config(kind));
}

struct ContinuousSetup {
  bool is_ode = false;
  OdeKind ode_kind = OdeKind::master;
  OdeParams ode;
  SdeKind sde_kind = SdeKind::belavkin;
  SdeParams sde;
};

ContinuousSetup assemble_equation(const ScenarioConfig& s) {
  ContinuousSetup c;
  const std::string& eq = s.equation;
  auto need = [&eq](bool have, const char* what) {
    if (!have) fail_config("equation " + eq + " requires \"" + what + "\"");
  };

  if (eq == "master" || eq == "averaged" || eq == "channel" || eq == "volterra_det") {
    c.is_ode = true;
    OdeParams& p = c.ode;
    p.h0 = s.has_h0 ? s.model.h0 : Mat::zero(2, 2);
    p.eps = s.model.eps;
    p.trace_form = s.trace_form;
    p.gamma = s.model.gamma;
    p.convention = s.model.convention;
    if (eq == "master") {
      c.ode_kind = OdeKind::master;
      need(s.has_c, "C");
      p.c = s.model.c;
      if (s.has_gamma) p.rho_reset = initial_state(s);
    } else if (eq == "averaged") {
      c.ode_kind = OdeKind::averaged;
      need(s.has_c_pair, "C_plus/C_minus");
      p.c_plus = s.model.c_plus;
      p.c_minus = s.model.c_minus;
    } else if (eq == "channel") {
      c.ode_kind = OdeKind::channel;
      need(s.has_kraus, "kraus");
      need(s.has_eps, "eps");
      p.kraus = s.model.kraus;
    } else {
      c.ode_kind = OdeKind::volterra_det;
      need(s.has_hamiltonian, "hamiltonian");
      need(s.has_gamma, "gamma");
      p.hamiltonian = s.model.hamiltonian;
    }
    return c;
  }

  SdeParams& p = c.sde;
  p.h0 = s.has_h0 ? s.model.h0 : Mat::zero(2, 2);
  p.eps = s.model.eps;
  p.trace_form = s.trace_form;
  p.gamma = s.model.gamma;
  p.convention = s.model.convention;
  if (s.has_observable) {
    p.observable = s.model.observable;
  } else if (eq == "noise") {
    p.observable = observable_preset("dft4");
  }
  if (eq == "belavkin") {
    c.sde_kind = SdeKind::belavkin;
    need(s.has_c, "C");
    p.c = s.model.c;
  } else if (eq == "alternating") {
    c.sde_kind = SdeKind::alternating;
    need(s.has_c_pair, "C_plus/C_minus");
    p.c_plus = s.model.c_plus;
    p.c_minus = s.model.c_minus;
  } else if (eq == "noise") {
    c.sde_kind = SdeKind::noise;
    need(s.has_kraus, "kraus");
    need(s.has_eps, "eps");
    p.kraus = s.model.kraus;
  } else {
    c.sde_kind = SdeKind::volterra_lift;
    need(s.has_c, "C");
    need(s.has_gamma, "gamma");
    p.c = s.model.c;
    p.rho0 = initial_state(s);
  }
  return c;
}

void check_initial_state(const Mat& rho0) {
  const DensityReport report = validate_density(rho0, 1e-12);
  if (!report.pass) {
    throw Error(ErrorCode::validation, "rho0 is not a density operator: " + report.summary());
  }
}

std::string file_header(std::uint64_t digest, const std::string& timestamp) {
  std::string h = "# schema_version=" + std::to_string(kSchemaVersion) + "\n";
  h += "# model_digest=" + digest_hex(digest) + "\n";
  if (!timestamp.empty()) h += "# generated=" + timestamp + "\n";
  return h;
}

int cmd_validate(const ScenarioConfig& s, const RunOptions& o, std::ostream& out) {
  std::vector<std::string> notes;
  if (s.has_kind || (s.has_experiment && model_based_experiment(s.experiment.name))) {
    ModelConfig mc = materialize_model(s);
    // The noise coupling only exists from n = 4 on; when the scenario leaves
    // n to a sweep, check buildability at the smallest legal scale.
    if (!s.has_n && mc.kind == ModelKind::noise) mc.n = 4;
    build_model(mc);
    notes.push_back(std::string("model ") + model_kind_name(mc.kind) + " digest " +
                    digest_hex(scenario_digest(s)));
  }
  if (s.has_equation) {
    ContinuousSetup setup = assemble_equation(s);
    if (!setup.is_ode) build_sde_spec(setup.sde_kind, setup.sde);
    check_initial_state(initial_state(s));
    notes.push_back("equation " + s.equation);
  }
  if (notes.empty()) notes.push_back("structure only");
  if (!o.quiet) {
    out << "ok:";
    for (std::size_t i = 0; i < notes.size(); ++i) out << (i ? "; " : " ") << notes[i];
    out << "\n";
  }
  return 0;
}

int cmd_constants(const ScenarioConfig& s, const RunOptions& o, std::ostream& out) {
  if (!s.has_kind) fail_config("\"kind\" is required for constants");
  const bool is_noise = s.model.kind == ModelKind::noise;
  Mat obs;
  if (s.has_observable) {
    obs = s.model.observable;
    const int want = is_noise ? 4 : 2;
    if (obs.rows() != want) {
      fail_config(std::string("\"observable\" must be ") + (is_noise ? "4x4" : "2x2") +
                  " for kind " + model_kind_name(s.model.kind));
    }
  } else {
    obs = is_noise ? observable_preset("dft4") : observable_preset("pauli_x");
  }
  const DerivedConstants k = derive_constants(
      hermitian_spectral(obs), is_noise ? ConstantsModel::noise : ConstantsModel::single);

  ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["model_digest"] = digest_hex(scenario_digest(s));
  j["model"] = is_noise ? "noise" : "single";
  if (!is_noise) {
    j["gamma"] = ordered_json::array({k.gamma.real(), k.gamma.imag()});
    j["alpha"] = k.alpha;
  } else {
    j["beta"] = ordered_json::array({k.beta[0], k.beta[1], k.beta[2]});
    ordered_json gai = ordered_json::array();
    ordered_json bij = ordered_json::array();
    for (int i = 0; i < 3; ++i) {
      ordered_json grow = ordered_json::array();
      ordered_json brow = ordered_json::array();
      for (int a = 0; a < 3; ++a) {
        grow.push_back(ordered_json::array({k.gamma_ai[i][a].real(), k.gamma_ai[i][a].imag()}));
        brow.push_back(k.b_ij[i][a]);
      }
      gai.push_back(std::move(grow));
      bij.push_back(std::move(brow));
    }
    j["gamma_ai"] = std::move(gai);
    j["b_ij"] = std::move(bij);
    j["covariance"] = matrix_json(k.covariance);
    j["covariance_sqrt"] = matrix_json(k.covariance_sqrt);
  }
  const fs::path path = resolve_path(s.out_json, "constants.json", o.out_dir);
  write_file(path, j.dump(2) + "\n");

  if (!o.quiet) {
    char line[200];
    out << "model: " << (is_noise ? "noise" : "single") << "\n";
    if (!is_noise) {
      std::snprintf(line, sizeof line, "gamma: %.12g %+.12gi\nalpha: %.12g\n", k.gamma.real(),
                    k.gamma.imag(), k.alpha);
      out << line;
    } else {
      std::snprintf(line, sizeof line, "beta:  %.12g  %.12g  %.12g\n", k.beta[0], k.beta[1],
                    k.beta[2]);
      out << line << "b_ij:\n";
      for (int i = 0; i < 3; ++i) {
        std::snprintf(line, sizeof line, "  %12.8f  %12.8f  %12.8f\n", k.b_ij[i][0], k.b_ij[i][1],
                      k.b_ij[i][2]);
        out << line;
      }
    }
    out << "wrote " << path.string() << "\n";
  }
  return 0;
}

int cmd_simulate(const ScenarioConfig& s, const RunOptions& o, std::ostream& out) {
  if (!s.has_n) fail_config("simulate requires \"n\"");
  if (s.t_final != 1.0) {
    fail_config("discrete trajectories run on the unit horizon; \"T\" must be 1");
  }
  const ModelConfig mc = materialize_model(s);
  const DiscreteModel model = build_model(mc);
  const std::uint64_t seed = o.seed_set ? o.seed : s.seed;
  const std::string stamp = o.deterministic ? "" : iso_timestamp_utc();

  auto emit = [&](const TrajectoryRecord& rec, long long index, long long total) {
    const fs::path csv =
        with_index(resolve_path(s.out_csv, "trajectory.csv", o.out_dir), index, total);
    write_file(csv, trajectory_csv(rec, stamp));
    const fs::path json =
        with_index(resolve_path(s.out_json, "trajectory.json", o.out_dir), index, total);
    write_file(json, trajectory_json(rec));
    if (!o.quiet) out << "wrote " << csv.string() << "\nwrote " << json.string() << "\n";
  };

  if (mc.kind == ModelKind::memory_swap) {
    // Deterministic chain: one closed-form evolution, no outcomes to sample.
    std::vector<Mat> states = evolve_memory_swap(model);
    TrajectoryRecord rec;
    rec.times.resize(states.size());
    for (std::size_t k = 0; k < states.size(); ++k) {
      rec.times[k] = static_cast<double>(k) / static_cast<double>(mc.n);
    }
    rec.states = std::move(states);
    rec.outcomes.assign(mc.n, -1);
    rec.x_path.assign(mc.n, {0.0, 0.0, 0.0});
    rec.seed = seed;
    rec.stream_index = 0;
    rec.model_digest = model.digest;
    emit(rec, 0, 1);
    return 0;
  }

  for (long long r = 0; r < s.replications; ++r) {
    const TrajectoryRecord rec = simulate(model, seed, static_cast<std::uint64_t>(r));
    emit(rec, r, s.replications);
  }
  return 0;
}

int cmd_integrate(const ScenarioConfig& s, const RunOptions& o, std::ostream& out) {
  if (!s.has_equation) fail_config("integrate requires \"equation\"");
  if (!s.has_dt) fail_config("integrate requires \"dt\"");
  const ContinuousSetup setup = assemble_equation(s);
  const Mat rho0 = initial_state(s);
  check_initial_state(rho0);
  const std::uint64_t seed = o.seed_set ? o.seed : s.seed;
  const std::uint64_t digest = scenario_digest(s);
  const std::string stamp = o.deterministic ? "" : iso_timestamp_utc();

  auto emit = [&](const SdePath& path, long long index, long long total) {
    const fs::path csv = with_index(resolve_path(s.out_csv, "path.csv", o.out_dir), index, total);
    write_file(csv, sde_csv(path, digest, stamp));
    const fs::path json =
        with_index(resolve_path(s.out_json, "path.json", o.out_dir), index, total);
    write_file(json, sde_json(path, digest));
    if (!o.quiet) out << "wrote " << csv.string() << "\nwrote " << json.string() << "\n";
  };

  if (setup.is_ode) {
    OdePath ode = solve_ode(setup.ode_kind, setup.ode, rho0, s.dt, s.t_final);
    SdePath path;  // deterministic solution in the shared path schema
    path.times = std::move(ode.times);
    path.states = std::move(ode.states);
    path.dt = ode.dt;
    path.seed = seed;
    path.stream_index = 0;
    path.scheme = s.equation;
    emit(path, 0, 1);
    return 0;
  }

  const SdeSpec spec = build_sde_spec(setup.sde_kind, setup.sde);
  EmOptions options;
  options.renormalize = s.renormalize;
  options.repair = s.repair;
  options.store_stride = s.store_stride;
  for (long long r = 0; r < s.replications; ++r) {
    options.stream_index = static_cast<std::uint64_t>(r);
    const SdePath path = em_integrate(spec, rho0, s.dt, s.t_final, seed, options);
    emit(path, r, s.replications);
  }
  return 0;
}

int cmd_experiment(const ScenarioConfig& s, const RunOptions& o, std::ostream& out) {
  if (!s.has_experiment) fail_config("experiment command requires an \"experiment\" block");
  HarnessOptions hopt;
  hopt.seed = o.seed_set ? o.seed : s.seed;
  hopt.threads = resolve_threads(o);
  const ExperimentSpec& e = s.experiment;

  ExperimentReport rep;
  if (e.name == "mean_convergence") {
    rep = mean_convergence(materialize_model(s), e.ns, s.replications, hopt);
  } else if (e.name == "weak_marginal") {
    rep = weak_marginal_compare(materialize_model(s), e.n, e.dt, s.replications, hopt);
  } else if (e.name == "martingale") {
    rep = martingale_diagnostics(materialize_model(s), e.n, s.replications, hopt);
  } else if (e.name == "residual_order") {
    rep = residual_order(e.residual_experiment, e.sweep, hopt);
  } else if (e.name == "robustness") {
    rep = robustness_scan(e.eps_list, s.replications, e.dt, hopt);
  } else {
    rep = deviation_scan(e.alpha, e.eps_list, s.replications, e.dt, hopt);
  }
  if (o.deterministic) rep.wall_seconds = 0.0;

  const std::uint64_t digest = experiment_digest(s);
  const std::string stamp = o.deterministic ? "" : iso_timestamp_utc();
  const std::string header = file_header(digest, stamp);

  ordered_json envelope;
  envelope["schema_version"] = kSchemaVersion;
  envelope["model_digest"] = digest_hex(digest);
  if (!stamp.empty()) envelope["generated"] = stamp;
  envelope["report"] = ordered_json::parse(rep.to_json());

  const fs::path json_path = resolve_path(s.out_json, "report.json", o.out_dir);
  const fs::path csv_path = resolve_path(s.out_csv, "report.csv", o.out_dir);
  const fs::path text_path = resolve_path(s.out_text, "report.txt", o.out_dir);
  write_file(json_path, envelope.dump(2) + "\n");
  write_file(csv_path, header + rep.to_csv_long());
  write_file(text_path, header + rep.to_text());
  if (!o.quiet) {
    out << rep.to_text();
    out << "wrote " << json_path.string() << "\nwrote " << csv_path.string() << "\nwrote "
        << text_path.string() << "\n";
  }
  if (!rep.all_pass()) return 5;
  return rep.inconclusive_only() ? 4 : 0;
}

}  // namespace

int resolve_threads(const RunOptions& options) {
  if (options.threads_set && options.threads >= 1) return options.threads;
  if (const char* env = std::getenv("BELAVKIN_LAB_THREADS")) {
    char* end = nullptr;
    const long value = std::strtol(env, &end, 10);
    if (end != nullptr && *end == '\0' && value >= 1 && value <= 1024) {
      return static_cast<int>(value);
    }
  }
  return 1;
}

int run(const RunOptions& options) {
  std::ostream& out = options.out ? *options.out : std::cout;
  std::ostream& err = options.err ? *options.err : std::cerr;
  try {
    const std::string& cmd = options.command;
    if (cmd != "validate" && cmd != "constants" && cmd != "simulate" && cmd != "integrate" &&
        cmd != "experiment") {
      fail_config("unknown command \"" + cmd + "\"");
    }
    if (options.config_path.empty()) fail_config("a scenario file path is required");
    const ScenarioConfig scenario = load_scenario(options.config_path);
    if (cmd == "validate") return cmd_validate(scenario, options, out);
    if (cmd == "constants") return cmd_constants(scenario, options, out);
    if (cmd == "simulate") return cmd_simulate(scenario, options, out);
    if (cmd == "integrate") return cmd_integrate(scenario, options, out);
    return cmd_experiment(scenario, options, out);
  } catch (const Error& e) {
    ordered_json j;
    j["error"] = {{"code", Error::code_name(e.code())}, {"message", e.what()}};
    err << j.dump() << "\n";
    return e.is_validation_class() ? 2 : 3;
  } catch (const std::exception& e) {
    ordered_json j;
    j["error"] = {{"code", "internal"}, {"message", e.what()}};
    err << j.dump() << "\n";
    return 2;
  }
}

}  // namespace belavkin
