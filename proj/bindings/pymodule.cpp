// belavkin-lab python bindings: the main operations of the C++ core, with
// matrices crossing the boundary as nested lists of python complex numbers
// and scenarios as the same JSON documents the CLI reads.

#include <pybind11/complex.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "belavkin/config.hpp"
#include "belavkin/discrete.hpp"
#include "belavkin/errors.hpp"
#include "belavkin/harness.hpp"
#include "belavkin/linalg.hpp"
#include "belavkin/serialize.hpp"
#include "json.hpp"

namespace py = pybind11;
using namespace belavkin;

namespace {

using PyMat = std::vector<std::vector<std::complex<double>>>;

Mat to_mat(const PyMat& rows, const char* name) {
  const int r = static_cast<int>(rows.size());
  if (r == 0) throw Error(ErrorCode::dimension, std::string(name) + ": empty matrix");
  const int c = static_cast<int>(rows[0].size());
  Mat m = Mat::zero(r, c);
  for (int i = 0; i < r; ++i) {
    if (static_cast<int>(rows[i].size()) != c) {
      throw Error(ErrorCode::dimension, std::string(name) + ": ragged rows");
    }
    for (int j = 0; j < c; ++j) m(i, j) = rows[i][j];
  }
  return m;
}

PyMat from_mat(const Mat& m) {
  PyMat rows(m.rows(), std::vector<std::complex<double>>(m.cols()));
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) rows[i][j] = m(i, j);
  }
  return rows;
}

py::dict density_report(const PyMat& rho, double tol) {
  const DensityReport r = validate_density(to_mat(rho, "validate_density"), tol);
  py::dict d;
  d["hermiticity_defect"] = r.hermiticity_defect;
  d["trace_defect"] = r.trace_defect;
  d["min_eigenvalue"] = r.min_eigenvalue;
  d["pass"] = r.pass;
  d["summary"] = r.summary();
  return d;
}

std::vector<double> eigenvalues(const PyMat& m) {
  return eig_hermitian(to_mat(m, "eigenvalues")).values;
}

PyMat exp_of(const PyMat& m) { return from_mat(matrix_exp(to_mat(m, "matrix_exp"))); }

py::dict constants_of(const PyMat& observable, const std::string& model) {
  ConstantsModel cm;
  if (model == "single") {
    cm = ConstantsModel::single;
  } else if (model == "noise") {
    cm = ConstantsModel::noise;
  } else {
    throw Error(ErrorCode::config, "derive_constants: model must be \"single\" or \"noise\"");
  }
  const DerivedConstants k =
      derive_constants(hermitian_spectral(to_mat(observable, "derive_constants")), cm);
  py::dict d;
  d["model"] = model;
  if (cm == ConstantsModel::single) {
    d["gamma"] = std::complex<double>(k.gamma);
    d["alpha"] = k.alpha;
  } else {
    d["beta"] = std::vector<double>{k.beta[0], k.beta[1], k.beta[2]};
    std::vector<std::vector<double>> bij(3, std::vector<double>(3));
    for (int i = 0; i < 3; ++i) {
      for (int a = 0; a < 3; ++a) bij[i][a] = k.b_ij[i][a];
    }
    d["b_ij"] = bij;
    d["covariance"] = from_mat(k.covariance);
    d["covariance_sqrt"] = from_mat(k.covariance_sqrt);
  }
  return d;
}

py::dict trajectory_dict(const TrajectoryRecord& rec) {
  py::dict d;
  d["times"] = rec.times;
  py::list states;
  for (const Mat& s : rec.states) states.append(from_mat(s));
  d["states"] = states;
  d["outcomes"] = rec.outcomes;
  py::list xs;
  for (const auto& x : rec.x_path) {
    std::vector<double> row(x.begin(), x.begin() + rec.noise_count);
    xs.append(row);
  }
  d["x"] = xs;
  d["seed"] = rec.seed;
  d["stream"] = rec.stream_index;
  d["model_digest"] = digest_hex(rec.model_digest);
  return d;
}

py::dict simulate_trajectory(const std::string& config_json, py::object seed,
                             std::uint64_t stream) {
  const ScenarioConfig scenario = parse_scenario(config_json);
  const DiscreteModel model = build_model(materialize_model(scenario));
  const std::uint64_t use_seed =
      seed.is_none() ? scenario.seed : seed.cast<std::uint64_t>();
  if (model.kind == ModelKind::memory_swap) {
    std::vector<Mat> states = evolve_memory_swap(model);
    TrajectoryRecord rec;
    rec.times.resize(states.size());
    for (std::size_t k = 0; k < states.size(); ++k) {
      rec.times[k] = static_cast<double>(k) / static_cast<double>(model.n);
    }
    rec.states = std::move(states);
    rec.outcomes.assign(model.n, -1);
    rec.x_path.assign(model.n, {0.0, 0.0, 0.0});
    rec.seed = use_seed;
    rec.stream_index = 0;
    rec.model_digest = model.digest;
    return trajectory_dict(rec);
  }
  return trajectory_dict(simulate(model, use_seed, stream));
}

py::object run_experiment(const std::string& config_json, int threads, py::object seed) {
  const ScenarioConfig scenario = parse_scenario(config_json);
  if (!scenario.has_experiment) {
    throw Error(ErrorCode::config, "run_experiment: scenario has no experiment block");
  }
  HarnessOptions opt;
  opt.seed = seed.is_none() ? scenario.seed : seed.cast<std::uint64_t>();
  opt.threads = threads;
  const ExperimentSpec& e = scenario.experiment;
  ExperimentReport rep;
  if (e.name == "mean_convergence") {
    rep = mean_convergence(materialize_model(scenario), e.ns, scenario.replications, opt);
  } else if (e.name == "weak_marginal") {
    rep = weak_marginal_compare(materialize_model(scenario), e.n, e.dt, scenario.replications,
                                opt);
  } else if (e.name == "martingale") {
    rep = martingale_diagnostics(materialize_model(scenario), e.n, scenario.replications, opt);
  } else if (e.name == "residual_order") {
    rep = residual_order(e.residual_experiment, e.sweep, opt);
  } else if (e.name == "robustness") {
    rep = robustness_scan(e.eps_list, scenario.replications, e.dt, opt);
  } else {
    rep = deviation_scan(e.alpha, e.eps_list, scenario.replications, e.dt, opt);
  }
  py::dict d;
  py::module_ json = py::module_::import("json");
  d["report"] = json.attr("loads")(rep.to_json());
  d["all_pass"] = rep.all_pass();
  d["inconclusive_only"] = rep.inconclusive_only();
  d["text"] = rep.to_text();
  return d;
}

std::string digest_of(const std::string& config_json) {
  const ScenarioConfig scenario = parse_scenario(config_json);
  return digest_hex(model_digest(materialize_model(scenario)));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Discrete repeated-measurement trajectory models and their continuous limits";

  py::register_exception<Error>(m, "ModelError");

  m.def("validate_density", &density_report, py::arg("rho"), py::arg("tol") = 1e-12,
        "Check Hermiticity, unit trace and positivity of a 2x2 state; returns a report dict.");
  m.def("eigenvalues", &eigenvalues, py::arg("m"),
        "Ascending eigenvalues of a Hermitian matrix.");
  m.def("matrix_exp", &exp_of, py::arg("m"), "Matrix exponential.");
  m.def("derive_constants", &constants_of, py::arg("observable"), py::arg("model"),
        "Measurement constants of an environment observable (model: single | noise).");
  m.def("simulate_trajectory", &simulate_trajectory, py::arg("config_json"),
        py::arg("seed") = py::none(), py::arg("stream") = 0,
        "Run one discrete trajectory from a scenario JSON document.");
  m.def("run_experiment", &run_experiment, py::arg("config_json"), py::arg("threads") = 1,
        py::arg("seed") = py::none(),
        "Run the scenario's experiment block; returns report dict with pass flags.");
  m.def("model_digest", &digest_of, py::arg("config_json"),
        "Hex fingerprint of the scenario's model block.");
  m.attr("schema_version") = kSchemaVersion;
}
