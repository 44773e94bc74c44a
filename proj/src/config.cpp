#include "belavkin/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

#include "belavkin/errors.hpp"
#include "belavkin/harness.hpp"
#include "json.hpp"

namespace belavkin {
namespace {

using njson = nlohmann::json;

[[noreturn]] void fail(const std::string& msg) {
  throw Error(ErrorCode::config, "scenario: " + msg);
}

void check_keys(const njson& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) fail("unknown key \"" + it.key() + "\" in " + where);
  }
}

double as_number(const njson& j, const std::string& name) {
  if (!j.is_number()) fail("\"" + name + "\" must be a number");
  return j.get<double>();
}

long long as_integer(const njson& j, const std::string& name) {
  if (!j.is_number_integer()) fail("\"" + name + "\" must be an integer");
  return j.get<long long>();
}

bool as_bool(const njson& j, const std::string& name) {
  if (!j.is_boolean()) fail("\"" + name + "\" must be a boolean");
  return j.get<bool>();
}

std::string as_string(const njson& j, const std::string& name) {
  if (!j.is_string()) fail("\"" + name + "\" must be a string");
  return j.get<std::string>();
}

// Complex matrix written row-major as rows*cols [re, im] pairs.
Mat parse_matrix(const njson& j, int rows, int cols, const std::string& name) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows * cols) {
    fail("\"" + name + "\" must be a row-major array of " + std::to_string(rows * cols) +
         " [re, im] pairs");
  }
  Mat m = Mat::zero(rows, cols);
  for (int idx = 0; idx < rows * cols; ++idx) {
    const njson& e = j[idx];
    if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
      fail("\"" + name + "\" entry " + std::to_string(idx) + " must be an [re, im] pair");
    }
    m(idx / cols, idx % cols) = cplx{e[0].get<double>(), e[1].get<double>()};
  }
  return m;
}

ModelKind parse_kind(const std::string& name) {
  if (name == "single") return ModelKind::single;
  if (name == "alternating") return ModelKind::alternating;
  if (name == "noise") return ModelKind::noise;
  if (name == "memory_reset") return ModelKind::memory_reset;
  if (name == "memory_swap") return ModelKind::memory_swap;
  fail("\"kind\" must be one of single, alternating, noise, memory_reset, memory_swap");
}

void parse_experiment(const njson& j, ExperimentSpec& spec) {
  if (!j.is_object()) fail("\"experiment\" must be an object");
  if (!j.contains("name")) fail("experiment block needs a \"name\"");
  spec.name = as_string(j.at("name"), "experiment.name");

  auto int_list = [](const njson& v, const std::string& name) {
    if (!v.is_array() || v.empty()) fail("\"" + name + "\" must be a non-empty array");
    std::vector<long long> out;
    for (const njson& e : v) {
      const long long value = as_integer(e, name + " entry");
      if (value < 1) fail("\"" + name + "\" entries must be >= 1");
      out.push_back(value);
    }
    return out;
  };
  auto eps_values = [](const njson& v, const std::string& name) {
    if (!v.is_array() || v.empty()) fail("\"" + name + "\" must be a non-empty array");
    std::vector<double> out;
    for (const njson& e : v) {
      const double value = as_number(e, name + " entry");
      if (!(value > 0.0 && value <= 1.0)) fail("\"" + name + "\" entries must be in (0, 1]");
      out.push_back(value);
    }
    return out;
  };
  auto positive_dt = [](const njson& v) {
    const double dt = as_number(v, "experiment.dt");
    if (!(dt > 0.0) || dt > 1.0) fail("\"experiment.dt\" must be in (0, 1]");
    return dt;
  };

  if (spec.name == "mean_convergence") {
    check_keys(j, "the experiment block", {"name", "ns"});
    if (!j.contains("ns")) fail("mean_convergence needs \"ns\"");
    spec.ns = int_list(j.at("ns"), "experiment.ns");
  } else if (spec.name == "weak_marginal") {
    check_keys(j, "the experiment block", {"name", "n", "dt"});
    if (!j.contains("n") || !j.contains("dt")) fail("weak_marginal needs \"n\" and \"dt\"");
    spec.n = as_integer(j.at("n"), "experiment.n");
    if (spec.n < 1) fail("\"experiment.n\" must be >= 1");
    spec.dt = positive_dt(j.at("dt"));
  } else if (spec.name == "martingale") {
    check_keys(j, "the experiment block", {"name", "n"});
    if (!j.contains("n")) fail("martingale needs \"n\"");
    spec.n = as_integer(j.at("n"), "experiment.n");
    if (spec.n < 1) fail("\"experiment.n\" must be >= 1");
  } else if (spec.name == "residual_order") {
    check_keys(j, "the experiment block", {"name", "experiment", "sweep"});
    if (!j.contains("experiment") || !j.contains("sweep")) {
      fail("residual_order needs \"experiment\" and \"sweep\"");
    }
    spec.residual_experiment = as_string(j.at("experiment"), "experiment.experiment");
    static const char* kKnown[] = {"increment_single",     "increment_alternating",
                                   "increment_noise",      "increment_memory",
                                   "exp_lemma",            "dilation_blocks",
                                   "hamiltonian_roundtrip"};
    bool known = false;
    for (const char* name : kKnown) known = known || spec.residual_experiment == name;
    if (!known) fail("unknown residual_order experiment \"" + spec.residual_experiment + "\"");
    spec.sweep = int_list(j.at("sweep"), "experiment.sweep");
  } else if (spec.name == "robustness") {
    check_keys(j, "the experiment block", {"name", "eps", "dt"});
    if (!j.contains("eps") || !j.contains("dt")) fail("robustness needs \"eps\" and \"dt\"");
    spec.eps_list = eps_values(j.at("eps"), "experiment.eps");
    spec.dt = positive_dt(j.at("dt"));
  } else if (spec.name == "deviation") {
    check_keys(j, "the experiment block", {"name", "alpha", "eps", "dt"});
    if (!j.contains("alpha") || !j.contains("eps") || !j.contains("dt")) {
      fail("deviation needs \"alpha\", \"eps\" and \"dt\"");
    }
    spec.alpha = as_number(j.at("alpha"), "experiment.alpha");
    if (!(spec.alpha >= 0.0 && spec.alpha < 0.5)) fail("\"experiment.alpha\" must be in [0, 0.5)");
    spec.eps_list = eps_values(j.at("eps"), "experiment.eps");
    spec.dt = positive_dt(j.at("dt"));
  } else {
    fail("unknown experiment \"" + spec.name +
         "\" (expected mean_convergence, weak_marginal, martingale, residual_order, "
         "robustness or deviation)");
  }
}

}  // namespace

Mat observable_preset(const std::string& name) {
  if (name == "pauli_x") {
    Mat x = Mat::zero(2, 2);
    x(0, 1) = x(1, 0) = cplx{1.0, 0.0};
    return x;
  }
  if (name == "dft4") return dft4_observable();
  fail("unknown observable preset \"" + name + "\" (expected pauli_x or dft4)");
}

Mat rho0_preset(const std::string& name) {
  if (name == "ket0") {
    Mat r = Mat::zero(2, 2);
    r(0, 0) = cplx{1.0, 0.0};
    return r;
  }
  if (name == "mixed") return Mat::identity(2) * cplx{0.5, 0.0};
  fail("unknown rho0 preset \"" + name + "\" (expected ket0 or mixed)");
}

ScenarioConfig parse_scenario(const std::string& json_text) {
  njson j;
  try {
    j = njson::parse(json_text);
  } catch (const njson::exception& e) {
    fail(std::string("not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail("top level must be a JSON object");
  check_keys(j, "the scenario",
             {"schema_version", "kind", "n", "dt", "T", "H0", "C", "C_plus", "C_minus", "kraus",
              "eps", "gamma", "hamiltonian", "observable", "rho0", "seed", "replications",
              "equation", "trace_form", "convention", "renormalize", "repair", "store_stride",
              "experiment", "output"});

  ScenarioConfig s;
  if (!j.contains("schema_version")) fail("\"schema_version\" is required");
  s.schema_version = static_cast<int>(as_integer(j.at("schema_version"), "schema_version"));
  if (s.schema_version != 1) {
    fail("unsupported schema_version " + std::to_string(s.schema_version) + " (expected 1)");
  }

  if (j.contains("kind")) {
    s.model.kind = parse_kind(as_string(j.at("kind"), "kind"));
    s.has_kind = true;
  }
  if (j.contains("n")) {
    s.n = as_integer(j.at("n"), "n");
    if (s.n < 1 || s.n > 100000000) fail("\"n\" must be in [1, 1e8]");
    s.has_n = true;
  }
  if (j.contains("dt")) {
    s.dt = as_number(j.at("dt"), "dt");
    if (!(s.dt > 0.0) || s.dt > 1.0) fail("\"dt\" must be in (0, 1]");
    s.has_dt = true;
  }
  if (j.contains("T")) {
    s.t_final = as_number(j.at("T"), "T");
    if (!(s.t_final > 0.0) || s.t_final > 1000.0) fail("\"T\" must be in (0, 1000]");
  }
  if (j.contains("H0")) {
    s.model.h0 = parse_matrix(j.at("H0"), 2, 2, "H0");
    s.has_h0 = true;
  }
  if (j.contains("C")) {
    s.model.c = parse_matrix(j.at("C"), 2, 2, "C");
    s.has_c = true;
  }
  if (j.contains("C_plus") != j.contains("C_minus")) {
    fail("\"C_plus\" and \"C_minus\" must be given together");
  }
  if (j.contains("C_plus")) {
    s.model.c_plus = parse_matrix(j.at("C_plus"), 2, 2, "C_plus");
    s.model.c_minus = parse_matrix(j.at("C_minus"), 2, 2, "C_minus");
    s.has_c_pair = true;
  }
  if (j.contains("kraus")) {
    const njson& k = j.at("kraus");
    if (!k.is_array() || k.size() != 3) fail("\"kraus\" must be an array of 3 matrices");
    for (int i = 0; i < 3; ++i) {
      s.model.kraus[i] = parse_matrix(k[i], 2, 2, "kraus[" + std::to_string(i) + "]");
    }
    s.has_kraus = true;
  }
  if (j.contains("eps")) {
    s.model.eps = as_number(j.at("eps"), "eps");
    if (!(s.model.eps >= 0.0 && s.model.eps <= 1.0)) fail("\"eps\" must be in [0, 1]");
    s.has_eps = true;
  }
  if (j.contains("gamma")) {
    s.model.gamma = as_number(j.at("gamma"), "gamma");
    if (!(s.model.gamma >= 0.0) || s.model.gamma > 1000.0) fail("\"gamma\" must be in [0, 1000]");
    s.has_gamma = true;
  }
  if (j.contains("hamiltonian")) {
    s.model.hamiltonian = parse_matrix(j.at("hamiltonian"), 4, 4, "hamiltonian");
    s.has_hamiltonian = true;
  }
  if (j.contains("observable")) {
    const njson& o = j.at("observable");
    if (o.is_string()) {
      s.model.observable = observable_preset(o.get<std::string>());
    } else if (o.is_array() && o.size() == 4) {
      s.model.observable = parse_matrix(o, 2, 2, "observable");
    } else if (o.is_array() && o.size() == 16) {
      s.model.observable = parse_matrix(o, 4, 4, "observable");
    } else {
      fail("\"observable\" must be a preset name or a 2x2 / 4x4 matrix");
    }
    s.has_observable = true;
  }
  if (j.contains("rho0")) {
    const njson& r = j.at("rho0");
    if (r.is_string()) {
      s.model.rho0 = rho0_preset(r.get<std::string>());
    } else {
      s.model.rho0 = parse_matrix(r, 2, 2, "rho0");
    }
    s.has_rho0 = true;
  }
  if (j.contains("seed")) {
    const njson& v = j.at("seed");
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                   v.get<long long>() < 0)) {
      fail("\"seed\" must be a non-negative integer");
    }
    s.seed = v.get<std::uint64_t>();
  }
  if (j.contains("replications")) {
    s.replications = as_integer(j.at("replications"), "replications");
    if (s.replications < 1 || s.replications > 100000000) {
      fail("\"replications\" must be in [1, 1e8]");
    }
  }
  if (j.contains("equation")) {
    s.equation = as_string(j.at("equation"), "equation");
    static const char* kEquations[] = {"master",   "averaged",    "channel", "volterra_det",
                                       "belavkin", "alternating", "noise",   "volterra_lift"};
    bool known = false;
    for (const char* name : kEquations) known = known || s.equation == name;
    if (!known) {
      fail("unknown equation \"" + s.equation +
           "\" (expected master, averaged, channel, volterra_det, belavkin, alternating, "
           "noise or volterra_lift)");
    }
    s.has_equation = true;
  }
  if (j.contains("trace_form")) {
    const std::string form = as_string(j.at("trace_form"), "trace_form");
    if (form == "literal") {
      s.trace_form = TraceForm::literal;
    } else if (form == "preserving") {
      s.trace_form = TraceForm::preserving;
    } else {
      fail("\"trace_form\" must be literal or preserving");
    }
  }
  if (j.contains("convention")) {
    const std::string conv = as_string(j.at("convention"), "convention");
    if (conv == "standard") {
      s.model.convention = DilationConvention::standard;
    } else if (conv == "paper") {
      s.model.convention = DilationConvention::paper;
    } else {
      fail("\"convention\" must be standard or paper");
    }
  }
  if (j.contains("renormalize")) s.renormalize = as_bool(j.at("renormalize"), "renormalize");
  if (j.contains("repair")) s.repair = as_bool(j.at("repair"), "repair");
  if (j.contains("store_stride")) {
    const long long stride = as_integer(j.at("store_stride"), "store_stride");
    if (stride < 1 || stride > 1000000) fail("\"store_stride\" must be in [1, 1e6]");
    s.store_stride = static_cast<int>(stride);
  }
  if (j.contains("experiment")) {
    parse_experiment(j.at("experiment"), s.experiment);
    s.has_experiment = true;
  }
  if (j.contains("output")) {
    const njson& o = j.at("output");
    if (!o.is_object()) fail("\"output\" must be an object");
    check_keys(o, "the output block", {"csv", "json", "text"});
    if (o.contains("csv")) s.out_csv = as_string(o.at("csv"), "output.csv");
    if (o.contains("json")) s.out_json = as_string(o.at("json"), "output.json");
    if (o.contains("text")) s.out_text = as_string(o.at("text"), "output.text");
  }
  return s;
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open scenario file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario(buffer.str());
}

ModelConfig materialize_model(const ScenarioConfig& scenario) {
  if (!scenario.has_kind) fail("\"kind\" is required for this command");
  ModelConfig m = scenario.model;
  m.n = scenario.has_n ? static_cast<int>(scenario.n) : 1;
  if (!scenario.has_h0) m.h0 = Mat::zero(2, 2);

  const bool is_noise = m.kind == ModelKind::noise;
  switch (m.kind) {
    case ModelKind::single:
      if (!scenario.has_c) fail("kind single requires \"C\"");
      break;
    case ModelKind::alternating:
      if (!scenario.has_c_pair) fail("kind alternating requires \"C_plus\" and \"C_minus\"");
      break;
    case ModelKind::noise:
      if (!scenario.has_kraus || !scenario.has_eps) fail("kind noise requires \"kraus\" and \"eps\"");
      break;
    case ModelKind::memory_reset:
      if (!scenario.has_c || !scenario.has_gamma) fail("kind memory_reset requires \"C\" and \"gamma\"");
      break;
    case ModelKind::memory_swap:
      if (!scenario.has_hamiltonian || !scenario.has_gamma) {
        fail("kind memory_swap requires \"hamiltonian\" and \"gamma\"");
      }
      break;
  }

  if (scenario.has_observable) {
    const int want = is_noise ? 4 : 2;
    if (m.observable.rows() != want) {
      fail(std::string("\"observable\" must be ") + (is_noise ? "4x4" : "2x2") + " for kind " +
           model_kind_name(m.kind));
    }
  } else {
    m.observable = is_noise ? observable_preset("dft4") : observable_preset("pauli_x");
  }
  if (!scenario.has_rho0) m.rho0 = rho0_preset("ket0");
  return m;
}

}  // namespace belavkin
