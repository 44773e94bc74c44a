// Scenario parsing, command dispatch and the CLI binary's execution contract:
// strict schema rejection, documented defaults, the five exit codes, and
// byte-identical deterministic outputs.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "belavkin/config.hpp"
#include "belavkin/errors.hpp"
#include "belavkin/runner.hpp"
#include "belavkin/serialize.hpp"
#include "json.hpp"

using namespace belavkin;
namespace fs = std::filesystem;

namespace {

const fs::path& scratch_dir() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / ("belavkin_cli_test_" + std::to_string(getpid()));
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

fs::path write_scenario(const std::string& name, const std::string& text) {
  const fs::path path = scratch_dir() / name;
  std::ofstream out(path, std::ios::binary);
  out << text;
  return path;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

RunResult run_command(const std::string& command, const fs::path& config,
                      const std::string& out_dir, bool deterministic = true,
                      bool seed_set = false, std::uint64_t seed = 0) {
  RunOptions options;
  options.command = command;
  options.config_path = config.string();
  options.out_dir = out_dir;
  options.deterministic = deterministic;
  options.quiet = false;
  options.seed_set = seed_set;
  options.seed = seed;
  std::ostringstream out, err;
  options.out = &out;
  options.err = &err;
  RunResult result;
  result.code = run(options);
  result.out = out.str();
  result.err = err.str();
  return result;
}

std::string error_code_of(const std::string& diagnostic) {
  const auto j = nlohmann::json::parse(diagnostic);
  return j.at("error").at("code").get<std::string>();
}

// Fragments shared by the scenario fixtures.
const char* kC = R"("C": [[0,0],[1,0],[0,0],[0,0]])";
const char* kH0 = R"("H0": [[1,0],[0,0],[0,0],[-1,0]])";
const char* kKraus = R"("kraus": [
  [[0,0],[0.57735026918962584,0],[0.57735026918962584,0],[0,0]],
  [[0,0],[0,-0.57735026918962584],[0,0.57735026918962584],[0,0]],
  [[0.57735026918962584,0],[0,0],[0,0],[-0.57735026918962584,0]]])";

std::string single_model_json() {
  return std::string("{\"schema_version\":1,\"kind\":\"single\",") + kH0 + "," + kC;
}

}  // namespace

TEST_CASE("parse_scenario rejects structural problems with config errors") {
  const std::vector<std::pair<std::string, std::string>> cases = {
      {"not json at all", "not valid JSON"},
      {"[1,2]", "top level must be a JSON object"},
      {R"({"kind":"single"})", "schema_version"},
      {R"({"schema_version":2})", "unsupported schema_version"},
      {R"({"schema_version":1,"surprise":3})", "unknown key \"surprise\""},
      {R"({"schema_version":1,"kind":"sextuple"})", "\"kind\" must be one of"},
      {R"({"schema_version":1,"n":0})", "\"n\" must be in"},
      {R"({"schema_version":1,"dt":0})", "\"dt\" must be in"},
      {R"({"schema_version":1,"T":-1})", "\"T\" must be in"},
      {R"({"schema_version":1,"seed":-4})", "\"seed\" must be a non-negative integer"},
      {R"({"schema_version":1,"replications":0})", "\"replications\" must be in"},
      {R"({"schema_version":1,"C":[[0,0],[1,0],[0,0]]})", "row-major array of 4"},
      {R"({"schema_version":1,"C":[[0,0],[1,0],[0,0],[1]]})", "must be an [re, im] pair"},
      {R"({"schema_version":1,"C_plus":[[0,0],[1,0],[0,0],[0,0]]})",
       "\"C_plus\" and \"C_minus\" must be given together"},
      {R"({"schema_version":1,"kraus":[]})", "array of 3 matrices"},
      {R"({"schema_version":1,"eps":1.5})", "\"eps\" must be in"},
      {R"({"schema_version":1,"observable":"pauli_q"})", "unknown observable preset"},
      {R"({"schema_version":1,"rho0":"pure"})", "unknown rho0 preset"},
      {R"({"schema_version":1,"equation":"heat"})", "unknown equation"},
      {R"({"schema_version":1,"trace_form":"both"})", "literal or preserving"},
      {R"({"schema_version":1,"convention":"mine"})", "standard or paper"},
      {R"({"schema_version":1,"experiment":{"name":"nope"}})", "unknown experiment"},
      {R"({"schema_version":1,"experiment":{"name":"mean_convergence"}})",
       "mean_convergence needs \"ns\""},
      {R"({"schema_version":1,"experiment":{"name":"mean_convergence","ns":[],"extra":1}})",
       "unknown key \"extra\""},
      {R"({"schema_version":1,"experiment":{"name":"weak_marginal","n":64}})",
       "weak_marginal needs \"n\" and \"dt\""},
      {R"({"schema_version":1,"experiment":{"name":"deviation","alpha":0.5,"eps":[0.1],"dt":0.01}})",
       "\"experiment.alpha\" must be in [0, 0.5)"},
      {R"({"schema_version":1,"experiment":{"name":"residual_order","experiment":"mystery","sweep":[1]}})",
       "unknown residual_order experiment"},
      {R"({"schema_version":1,"experiment":{"name":"robustness","eps":[0.0],"dt":0.01}})",
       "entries must be in (0, 1]"},
      {R"({"schema_version":1,"output":{"pdf":"x"}})", "unknown key \"pdf\""},
  };
  for (const auto& [text, expected] : cases) {
    CAPTURE(text);
    try {
      parse_scenario(text);
      FAIL_CHECK("expected a config error for: " << text);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::config);
      CHECK_MESSAGE(std::string(e.what()).find(expected) != std::string::npos,
                    (std::string("message was: ") + e.what()));
    }
  }
}

TEST_CASE("materialize_model fills documented defaults and enforces kind requirements") {
  const ScenarioConfig s = parse_scenario(single_model_json() + ",\"n\":12}");
  const ModelConfig m = materialize_model(s);
  CHECK(m.n == 12);
  // default observable: pauli_x
  CHECK(m.observable(0, 1) == cplx{1.0, 0.0});
  CHECK(m.observable(0, 0) == cplx{0.0, 0.0});
  // default rho0: ket0
  CHECK(m.rho0(0, 0) == cplx{1.0, 0.0});
  CHECK(m.rho0(1, 1) == cplx{0.0, 0.0});

  // noise kind defaults to the dft4 observable
  const ScenarioConfig sn = parse_scenario(
      std::string("{\"schema_version\":1,\"kind\":\"noise\",\"eps\":0.1,") + kKraus + "}");
  CHECK(materialize_model(sn).observable.rows() == 4);

  const std::vector<std::pair<std::string, std::string>> incomplete = {
      {R"({"schema_version":1,"kind":"single"})", "kind single requires \"C\""},
      {R"({"schema_version":1,"kind":"alternating"})", "requires \"C_plus\" and \"C_minus\""},
      {R"({"schema_version":1,"kind":"noise"})", "requires \"kraus\" and \"eps\""},
      {R"({"schema_version":1,"kind":"memory_reset","C":[[0,0],[1,0],[0,0],[0,0]]})",
       "requires \"C\" and \"gamma\""},
      {R"({"schema_version":1,"kind":"memory_swap","gamma":1.0})",
       "requires \"hamiltonian\" and \"gamma\""},
  };
  for (const auto& [text, expected] : incomplete) {
    CAPTURE(text);
    try {
      materialize_model(parse_scenario(text));
      FAIL_CHECK("expected a config error for: " << text);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::config);
      CHECK_MESSAGE(std::string(e.what()).find(expected) != std::string::npos,
                    (std::string("message was: ") + e.what()));
    }
  }

  // explicit observable of the wrong dimension for the kind
  const ScenarioConfig sbad = parse_scenario(
      std::string("{\"schema_version\":1,\"kind\":\"noise\",\"eps\":0.1,") + kKraus +
      R"(,"observable":[[1,0],[0,0],[0,0],[-1,0]]})");
  CHECK_THROWS_AS(materialize_model(sbad), Error);
}

TEST_CASE("presets have their stated values") {
  const Mat x = observable_preset("pauli_x");
  CHECK(x(0, 0) == cplx{0.0, 0.0});
  CHECK(x(0, 1) == cplx{1.0, 0.0});
  CHECK(x(1, 0) == cplx{1.0, 0.0});
  const Mat d = observable_preset("dft4");
  CHECK(d.rows() == 4);
  CHECK(d.hermiticity_defect() < 1e-12);
  const Mat k0 = rho0_preset("ket0");
  CHECK(k0(0, 0) == cplx{1.0, 0.0});
  CHECK(k0(1, 1) == cplx{0.0, 0.0});
  const Mat mixed = rho0_preset("mixed");
  CHECK(mixed(0, 0) == cplx{0.5, 0.0});
  CHECK(mixed(1, 1) == cplx{0.5, 0.0});
  CHECK(mixed(0, 1) == cplx{0.0, 0.0});
}

TEST_CASE("validate: exit 0 on a sound model, exit 2 with an assumption diagnostic on sigma_z") {
  const fs::path good = write_scenario("validate_good.json", single_model_json() + "}");
  const RunResult ok = run_command("validate", good, (scratch_dir() / "v1").string());
  CHECK(ok.code == 0);
  CHECK(ok.out.find("ok:") != std::string::npos);
  CHECK(ok.out.find("digest") != std::string::npos);

  // sigma_z is diagonal in the environment reference basis: the normalized
  // increment degenerates, which the model builder rejects as an assumption
  // violation -> validation-class exit code 2.
  const fs::path bad = write_scenario(
      "validate_sigz.json",
      single_model_json() + R"(,"observable":[[1,0],[0,0],[0,0],[-1,0]]})");
  const RunResult rej = run_command("validate", bad, (scratch_dir() / "v2").string());
  CHECK(rej.code == 2);
  CHECK(error_code_of(rej.err) == "assumption");
}

TEST_CASE("constants: dft4 noise observable yields the 1/3 cross-covariation table") {
  const fs::path cfg = write_scenario(
      "constants_noise.json",
      std::string("{\"schema_version\":1,\"kind\":\"noise\",\"eps\":0.1,") + kKraus +
          R"(,"observable":"dft4"})");
  const std::string dir = (scratch_dir() / "constants").string();
  const RunResult r = run_command("constants", cfg, dir);
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(read_file(fs::path(dir) / "constants.json"));
  CHECK(j.at("schema_version") == 1);
  CHECK(j.at("model_digest").get<std::string>().size() == 16);
  CHECK(j.at("model") == "noise");
  for (int i = 0; i < 3; ++i) {
    for (int a = 0; a < 3; ++a) {
      const double want = (i == a) ? 0.0 : 1.0 / 3.0;
      CHECK(j.at("b_ij")[i][a].get<double>() == doctest::Approx(want).epsilon(1e-9));
    }
  }
  // covariance B = I - b_ij off-diagonal, serialized as [re, im] pairs
  CHECK(j.at("covariance")[0][0].get<double>() == doctest::Approx(1.0));
  CHECK(j.at("covariance")[1][0].get<double>() == doctest::Approx(-1.0 / 3.0));
}

TEST_CASE("simulate: deterministic runs are byte-identical and indexed per replication") {
  const fs::path cfg = write_scenario(
      "simulate_two.json", single_model_json() + R"(,"n":32,"seed":9,"replications":2})");
  const std::string dir1 = (scratch_dir() / "sim1").string();
  const std::string dir2 = (scratch_dir() / "sim2").string();
  REQUIRE(run_command("simulate", cfg, dir1).code == 0);
  REQUIRE(run_command("simulate", cfg, dir2).code == 0);
  for (const char* name : {"trajectory_0.csv", "trajectory_1.csv", "trajectory_0.json"}) {
    CAPTURE(name);
    const std::string a = read_file(fs::path(dir1) / name);
    CHECK(a == read_file(fs::path(dir2) / name));
    CHECK(a.find("schema_version") != std::string::npos);
    CHECK(a.find("generated") == std::string::npos);  // suppressed when deterministic
  }
  CHECK(read_file(fs::path(dir1) / "trajectory_0.csv").find("# schema_version=1") !=
        std::string::npos);
  // the two streams differ from each other
  CHECK(read_file(fs::path(dir1) / "trajectory_0.csv") !=
        read_file(fs::path(dir1) / "trajectory_1.csv"));

  // a different --seed changes the bytes
  const std::string dir3 = (scratch_dir() / "sim3").string();
  REQUIRE(run_command("simulate", cfg, dir3, true, true, 10).code == 0);
  CHECK(read_file(fs::path(dir1) / "trajectory_0.csv") !=
        read_file(fs::path(dir3) / "trajectory_0.csv"));

  // timestamp line appears when not deterministic
  const std::string dir4 = (scratch_dir() / "sim4").string();
  REQUIRE(run_command("simulate", cfg, dir4, /*deterministic=*/false).code == 0);
  CHECK(read_file(fs::path(dir4) / "trajectory_0.csv").find("# generated=") !=
        std::string::npos);
}

TEST_CASE("simulate: memory_swap writes one closed-form trajectory without outcomes") {
  // H couples |0,e1> and |1,e0>; gamma sets the refresh rate.
  std::string h(R"("hamiltonian": [)");
  for (int idx = 0; idx < 16; ++idx) {
    h += (idx == 6 || idx == 9) ? "[1,0]" : "[0,0]";
    if (idx < 15) h += ",";
  }
  h += "]";
  const fs::path cfg = write_scenario(
      "simulate_swap.json",
      R"({"schema_version":1,"kind":"memory_swap","gamma":1.0,"n":16,)" + h + "}");
  const std::string dir = (scratch_dir() / "swap").string();
  REQUIRE(run_command("simulate", cfg, dir).code == 0);
  const std::string csv = read_file(fs::path(dir) / "trajectory.csv");
  // 4 header comment lines + column names + 17 state rows
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 22);
  CHECK(csv.find("\n1,0.0625,-1,0,") != std::string::npos);  // no sampled outcomes
}

TEST_CASE("simulate rejects a non-unit horizon") {
  const fs::path cfg =
      write_scenario("simulate_T.json", single_model_json() + R"(,"n":8,"T":2.0})");
  const RunResult r = run_command("simulate", cfg, (scratch_dir() / "simT").string());
  CHECK(r.code == 2);
  CHECK(error_code_of(r.err) == "config");
}

TEST_CASE("integrate: master equation endpoint matches the closed-form decay") {
  const fs::path cfg = write_scenario(
      "integrate_master.json",
      R"({"schema_version":1,"equation":"master","dt":0.01,)" + std::string(kC) +
          R"(,"rho0":"mixed"})");
  const std::string dir = (scratch_dir() / "ode").string();
  REQUIRE(run_command("integrate", cfg, dir).code == 0);
  const auto j = nlohmann::json::parse(read_file(fs::path(dir) / "path.json"));
  CHECK(j.at("scheme") == "master");
  const auto& re11 = j.at("rows").at("re11");
  // excited population decays as 0.5 e^{-t} under the lowering coupling
  CHECK(re11.back().get<double>() ==
        doctest::Approx(0.5 * std::exp(-1.0)).epsilon(1e-7));
  const auto& outcome = j.at("rows").at("outcome");
  CHECK(outcome.front().get<int>() == -1);
}

TEST_CASE("integrate: same seed reproduces an SDE path, different stream differs") {
  const fs::path cfg = write_scenario(
      "integrate_sde.json",
      R"({"schema_version":1,"equation":"belavkin","dt":0.01,)" + std::string(kH0) + "," + kC +
          R"(,"rho0":"mixed","seed":11,"replications":2})");
  const std::string dir1 = (scratch_dir() / "sde1").string();
  const std::string dir2 = (scratch_dir() / "sde2").string();
  REQUIRE(run_command("integrate", cfg, dir1).code == 0);
  REQUIRE(run_command("integrate", cfg, dir2).code == 0);
  CHECK(read_file(fs::path(dir1) / "path_0.csv") == read_file(fs::path(dir2) / "path_0.csv"));
  CHECK(read_file(fs::path(dir1) / "path_0.csv") != read_file(fs::path(dir1) / "path_1.csv"));
  const std::string csv = read_file(fs::path(dir1) / "path_0.csv");
  CHECK(csv.find(",scheme") != std::string::npos);
  CHECK(csv.find("euler") != std::string::npos);
}

TEST_CASE("integrate: a stiff lift overruns the divergence guard -> exit 3") {
  const fs::path cfg = write_scenario(
      "integrate_diverge.json",
      R"({"schema_version":1,"equation":"volterra_lift","dt":0.5,"gamma":20.0,)"
      R"("C":[[0,0],[30,0],[0,0],[0,0]],"rho0":"mixed"})");
  const RunResult r = run_command("integrate", cfg, (scratch_dir() / "div").string());
  CHECK(r.code == 3);
  CHECK(error_code_of(r.err) == "divergence");
}

TEST_CASE("experiment exit codes separate pass, inconclusive-only and failure") {
  // A zero coupling freezes the model: every error sits at roundoff, so the
  // quartering check cannot certify a rate -> all pass, inconclusive-only, 4.
  const fs::path frozen = write_scenario(
      "exp_frozen.json",
      R"({"schema_version":1,"kind":"single","C":[[0,0],[0,0],[0,0],[0,0]],)"
      R"("replications":1000,"experiment":{"name":"mean_convergence","ns":[4,8,16]}})");
  CHECK(run_command("experiment", frozen, (scratch_dir() / "e4").string()).code == 4);

  // n = 4 is far too coarse for the limit comparison: the discrete bias dwarfs
  // the Monte Carlo bands and the checks genuinely fail -> 5.
  const fs::path coarse = write_scenario(
      "exp_coarse.json",
      single_model_json() +
          R"(,"rho0":"mixed","replications":10000,)"
          R"("experiment":{"name":"weak_marginal","n":4,"dt":0.0625}})");
  CHECK(run_command("experiment", coarse, (scratch_dir() / "e5").string()).code == 5);

  // The second-order exponential expansion holds at desk scale -> 0.
  const fs::path lemma = write_scenario(
      "exp_lemma.json",
      R"({"schema_version":1,"experiment":{"name":"residual_order",)"
      R"("experiment":"exp_lemma","sweep":[100,400,1600,6400]}})");
  const std::string dir = (scratch_dir() / "e0").string();
  const RunResult r = run_command("experiment", lemma, dir);
  CHECK(r.code == 0);
  const auto j = nlohmann::json::parse(read_file(fs::path(dir) / "report.json"));
  CHECK(j.at("schema_version") == 1);
  CHECK(j.at("model_digest").get<std::string>().size() == 16);
  CHECK(j.at("report").at("experiment") == "residual_order");
  CHECK(!j.at("report").at("slopes").empty());
  const std::string csv = read_file(fs::path(dir) / "report.csv");
  CHECK(csv.find("# model_digest=") != std::string::npos);
}

TEST_CASE("runner rejects unknown commands and missing files") {
  const fs::path cfg = write_scenario("ok.json", single_model_json() + "}");
  CHECK(run_command("transmogrify", cfg, (scratch_dir() / "x1").string()).code == 2);
  CHECK(run_command("validate", scratch_dir() / "no_such_file.json",
                    (scratch_dir() / "x2").string())
            .code == 2);
}

TEST_CASE("resolve_threads: flag beats environment beats default") {
  RunOptions o;
  unsetenv("BELAVKIN_LAB_THREADS");
  CHECK(resolve_threads(o) == 1);
  setenv("BELAVKIN_LAB_THREADS", "3", 1);
  CHECK(resolve_threads(o) == 3);
  setenv("BELAVKIN_LAB_THREADS", "junk", 1);
  CHECK(resolve_threads(o) == 1);
  setenv("BELAVKIN_LAB_THREADS", "3", 1);
  o.threads = 7;
  o.threads_set = true;
  CHECK(resolve_threads(o) == 7);
  unsetenv("BELAVKIN_LAB_THREADS");
}

// ---------------------------------------------------------------------------
// The installed binary, exercised end-to-end when the build exports its path.
// ---------------------------------------------------------------------------

namespace {

int system_exit_code(const std::string& command) {
  const int status = std::system(command.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("CLI binary: deterministic runs are byte-identical across thread counts") {
  const char* cli = std::getenv("BELAVKIN_LAB_CLI");
  if (cli == nullptr || *cli == '\0') {
    MESSAGE("BELAVKIN_LAB_CLI not set; skipping binary checks");
    return;
  }
  const std::string bin(cli);
  const fs::path cfg = write_scenario(
      "cli_lemma.json",
      R"({"schema_version":1,"experiment":{"name":"residual_order",)"
      R"("experiment":"exp_lemma","sweep":[100,400,1600,6400]}})");
  const fs::path d1 = scratch_dir() / "cli1";
  const fs::path d2 = scratch_dir() / "cli2";
  const fs::path d3 = scratch_dir() / "cli3";

  CHECK(system_exit_code(bin + " experiment " + cfg.string() + " --deterministic --quiet" +
                         " --out-dir " + d1.string()) == 0);
  CHECK(system_exit_code(bin + " experiment " + cfg.string() + " --deterministic --quiet" +
                         " --out-dir " + d2.string()) == 0);
  CHECK(system_exit_code(bin + " experiment " + cfg.string() + " --deterministic --quiet" +
                         " --threads 8 --out-dir " + d3.string()) == 0);
  const std::string base = read_file(d1 / "report.json");
  CHECK(base == read_file(d2 / "report.json"));
  CHECK(base == read_file(d3 / "report.json"));
  CHECK(read_file(d1 / "report.csv") == read_file(d3 / "report.csv"));

  // --help exits 0; a bad flag is a structured validation failure (2)
  CHECK(system_exit_code(bin + " --help > /dev/null") == 0);
  const fs::path errfile = scratch_dir() / "cli_err.txt";
  CHECK(system_exit_code(bin + " simulate " + cfg.string() + " --no-such-flag 2> " +
                         errfile.string()) == 2);
  CHECK(error_code_of(read_file(errfile)) == "config");

  // validate through the real binary: sigma_z assumption -> 2
  const fs::path bad = write_scenario(
      "cli_sigz.json",
      single_model_json() + R"(,"observable":[[1,0],[0,0],[0,0],[-1,0]]})");
  CHECK(system_exit_code(bin + " validate " + bad.string() + " --quiet 2> " +
                         errfile.string()) == 2);
  CHECK(error_code_of(read_file(errfile)) == "assumption");
}
