#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "belavkin/discrete.hpp"
#include "belavkin/errors.hpp"
#include "belavkin/linalg.hpp"
#include "belavkin/matrix.hpp"
#include "belavkin/rng.hpp"

using namespace belavkin;

namespace {

constexpr double kPi = 3.14159265358979323846;

Mat ket0_density() {
  Mat m = Mat::zero(2, 2);
  m(0, 0) = cplx{1.0, 0.0};
  return m;
}

Mat lowering() {
  Mat c = Mat::zero(2, 2);
  c(0, 1) = cplx{1.0, 0.0};
  return c;
}

Mat random_density(RngStream& rng) {
  Mat m(2, 2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) m(i, j) = cplx{rng.normal(), rng.normal()};
  Mat rho = m * m.adjoint();
  return rho * cplx{1.0 / rho.trace().real(), 0.0};
}

Mat dft4_observable() {
  Mat f(4, 4);
  for (int a = 0; a < 4; ++a)
    for (int j = 0; j < 4; ++j)
      f(a, j) = std::exp(cplx{0.0, 2.0 * kPi * a * j / 4.0}) * cplx{0.5, 0.0};
  Mat a = Mat::zero(4, 4);
  for (int j = 0; j < 4; ++j) {
    Mat col(4, 1);
    for (int r = 0; r < 4; ++r) col(r, 0) = f(r, j);
    a += col * col.adjoint() * cplx{static_cast<double>(j), 0.0};
  }
  return a.hermitized();
}

std::array<Mat, 3> pauli_kraus() {
  const double w = 1.0 / std::sqrt(3.0);
  return {pauli_x() * cplx{w, 0.0}, pauli_y() * cplx{w, 0.0}, pauli_z() * cplx{w, 0.0}};
}

ModelConfig benchmark_single(int n) {
  ModelConfig cfg;
  cfg.kind = ModelKind::single;
  cfg.n = n;
  cfg.h0 = pauli_z();
  cfg.c = lowering();
  cfg.observable = pauli_x();
  cfg.rho0 = ket0_density();
  return cfg;
}

Mat lindblad(const Mat& rho, const Mat& h0, const Mat& c) {
  const Mat comm = h0 * rho - rho * h0;
  const Mat cc = c.adjoint() * c;
  return comm * cplx{0.0, -1.0} + c * rho * c.adjoint() -
         (cc * rho + rho * cc) * cplx{0.5, 0.0};
}

Mat theta(const Mat& rho, const Mat& x) {
  const Mat sym = x + x.adjoint();
  return x * rho + rho * x.adjoint() - rho * (sym * rho).trace();
}

}  // namespace

TEST_CASE("trajectory states stay densities and probabilities are normalized") {
  const DiscreteModel model = build_model(benchmark_single(200));
  const TrajectoryRecord rec = simulate(model, 11, 0);
  REQUIRE(rec.states.size() == 201);
  REQUIRE(rec.outcomes.size() == 200);
  for (const Mat& s : rec.states) {
    CHECK(validate_density(s, 1e-10).pass);
  }
  RngStream rng(11, 99);
  Mat state = model.rho0;
  for (int k = 0; k < 50; ++k) {
    const StepResult r = step(model, state, k, rng);
    CHECK(std::abs(r.probs[0] + r.probs[1] - 1.0) <= 1e-12);
    CHECK((r.outcome == 0 || r.outcome == 1));
    CHECK(std::isfinite(r.x[0]));
    state = r.next_state;
  }
}

TEST_CASE("one-step increment matches drift plus gamma-weighted diffusion") {
  // Benchmark model: gamma = -1 for the x-observable, so the increment is
  // rho + L(rho)/n - Theta_C(rho) X / sqrt(n) + O(n^{-3/2}).
  RngStream seed_rng(21, 0);
  const Mat rho = random_density(seed_rng);
  const Mat h0 = pauli_z();
  const Mat c = lowering();

  std::vector<double> residuals;
  for (int n : {10000, 1000000}) {
    ModelConfig cfg = benchmark_single(n);
    const DiscreteModel model = build_model(cfg);
    REQUIRE(model.has_constants);
    CHECK(std::abs(model.constants.gamma - cplx{-1.0, 0.0}) <= 1e-12);
    const Mat gc = c * model.constants.gamma;

    double worst = 0.0;
    for (int j = 0; j < 2; ++j) {
      const Mat cand = apply_superop(model.candidate_superops[0][j], rho);
      const double p = cand.trace().real();
      REQUIRE(p > 0.0);
      const Mat next = cand * cplx{1.0 / p, 0.0};
      const double q1 = (j == 0) ? (1.0 - p) : p;  // this outcome's own probability
      (void)q1;
      const double p0 = apply_superop(model.candidate_superops[0][0], rho).trace().real();
      const double x = (j == 1) ? std::sqrt(p0 / (1.0 - p0)) : -std::sqrt((1.0 - p0) / p0);
      const Mat predicted =
          rho + lindblad(rho, h0, c) * cplx{1.0 / n, 0.0} +
          theta(rho, gc) * cplx{x / std::sqrt(static_cast<double>(n)), 0.0};
      worst = std::max(worst, (next - predicted).fnorm());
    }
    residuals.push_back(worst);
  }
  // Two decades in n; order n^{-3/2} means a factor 1000, require >= 400.
  CHECK(residuals[0] / residuals[1] >= 400.0);
  CHECK(residuals[1] <= 1e-8);
}

TEST_CASE("conditional increment moments are exact") {
  RngStream rng(22, 0);
  const Mat rho = random_density(rng);
  const DiscreteModel model = build_model(benchmark_single(100));
  const double p = apply_superop(model.candidate_superops[0][0], rho).trace().real();
  const double q = 1.0 - p;
  const double x0 = -std::sqrt(q / p), x1 = std::sqrt(p / q);
  CHECK(std::abs(p * x0 + q * x1) <= 1e-13);                  // E[X] = 0
  CHECK(std::abs(p * x0 * x0 + q * x1 * x1 - 1.0) <= 1e-13);  // E[X^2] = 1
}

TEST_CASE("noise model: conditional cross moments approach -b_ij") {
  ModelConfig cfg;
  cfg.kind = ModelKind::noise;
  cfg.n = 10000;
  cfg.kraus = pauli_kraus();
  cfg.eps = 0.1;
  cfg.observable = dft4_observable();
  cfg.rho0 = ket0_density();
  const DiscreteModel model = build_model(cfg);
  REQUIRE(model.has_constants);

  RngStream rng(23, 0);
  const Mat rho = random_density(rng);
  std::array<double, 4> probs{};
  for (int j = 0; j < 4; ++j) {
    probs[j] = apply_superop(model.candidate_superops[0][j], rho).trace().real();
  }
  // Exact conditional moments of the indicator-based increments.
  for (int i = 1; i <= 3; ++i) {
    const double qi = probs[i];
    double mean = 0.0, second = 0.0;
    for (int j = 0; j < 4; ++j) {
      const double xi = ((j == i ? 1.0 : 0.0) - qi) / std::sqrt(qi * (1.0 - qi));
      mean += probs[j] * xi;
      second += probs[j] * xi * xi;
    }
    CHECK(std::abs(mean) <= 1e-12);
    CHECK(std::abs(second - 1.0) <= 1e-12);
    for (int l = 1; l <= 3; ++l) {
      if (l == i) continue;
      const double ql = probs[l];
      double cross = 0.0;
      for (int j = 0; j < 4; ++j) {
        const double xi = ((j == i ? 1.0 : 0.0) - qi) / std::sqrt(qi * (1.0 - qi));
        const double xl = ((j == l ? 1.0 : 0.0) - ql) / std::sqrt(ql * (1.0 - ql));
        cross += probs[j] * xi * xl;
      }
      const double exact = -std::sqrt(qi * ql / ((1.0 - qi) * (1.0 - ql)));
      CHECK(std::abs(cross - exact) <= 1e-12);
      // As n grows the exact value approaches the derived constant -b_il.
      CHECK(std::abs(exact + model.constants.b_ij[i - 1][l - 1]) <= 0.05);
    }
  }
}

TEST_CASE("noise model with eps = 0 leaves the state constant") {
  ModelConfig cfg;
  cfg.kind = ModelKind::noise;
  cfg.n = 100;
  cfg.kraus = pauli_kraus();
  cfg.eps = 0.0;
  cfg.observable = dft4_observable();
  RngStream rng(24, 0);
  cfg.rho0 = random_density(rng);
  const DiscreteModel model = build_model(cfg);
  const TrajectoryRecord rec = simulate(model, 5, 0);
  for (const Mat& s : rec.states) {
    CHECK(max_abs_diff(s, cfg.rho0) <= 1e-12);
  }
}

TEST_CASE("memory_reset with gamma = 0 reproduces the single model path for path") {
  ModelConfig single_cfg = benchmark_single(300);
  ModelConfig reset_cfg = single_cfg;
  reset_cfg.kind = ModelKind::memory_reset;
  reset_cfg.gamma = 0.0;
  const DiscreteModel m1 = build_model(single_cfg);
  const DiscreteModel m2 = build_model(reset_cfg);
  const TrajectoryRecord r1 = simulate(m1, 7, 3);
  const TrajectoryRecord r2 = simulate(m2, 7, 3);
  REQUIRE(r1.states.size() == r2.states.size());
  for (std::size_t k = 0; k < r1.states.size(); ++k) {
    CHECK(max_abs_diff(r1.states[k], r2.states[k]) == 0.0);
  }
  CHECK(r1.outcomes == r2.outcomes);
}

TEST_CASE("memory_reset relaxes each step towards the reset state") {
  ModelConfig cfg = benchmark_single(50);
  cfg.kind = ModelKind::memory_reset;
  cfg.gamma = 2.0;
  const DiscreteModel reset_model = build_model(cfg);
  const DiscreteModel plain_model = build_model(benchmark_single(50));

  RngStream rng_a(31, 0), rng_b(31, 0);
  RngStream state_rng(32, 0);
  const Mat state = random_density(state_rng);
  const StepResult plain = step(plain_model, state, 0, rng_a);
  const StepResult mixed = step(reset_model, state, 0, rng_b);
  CHECK(plain.outcome == mixed.outcome);
  const double keep = std::exp(-2.0 / 50.0);
  const Mat want = plain.next_state * cplx{keep, 0.0} + cfg.rho0 * cplx{1.0 - keep, 0.0};
  CHECK(max_abs_diff(mixed.next_state, want) <= 1e-14);
}

TEST_CASE("alternating couplings act in step-parity order") {
  ModelConfig alt = benchmark_single(100);
  alt.kind = ModelKind::alternating;
  alt.c_plus = lowering();
  alt.c_minus = lowering().adjoint();
  const DiscreteModel alt_model = build_model(alt);

  ModelConfig minus_cfg = benchmark_single(100);
  minus_cfg.c = alt.c_minus;
  ModelConfig plus_cfg = benchmark_single(100);
  plus_cfg.c = alt.c_plus;
  const DiscreteModel minus_model = build_model(minus_cfg);
  const DiscreteModel plus_model = build_model(plus_cfg);

  RngStream rng(33, 0);
  const Mat state = random_density(rng);
  // Even step index: the minus coupling drives the candidates.
  for (int j = 0; j < 2; ++j) {
    CHECK(max_abs_diff(alt_model.candidate_superops[0][j],
                       minus_model.candidate_superops[0][j]) <= 1e-14);
    CHECK(max_abs_diff(alt_model.candidate_superops[1][j],
                       plus_model.candidate_superops[0][j]) <= 1e-14);
  }
  RngStream r1(34, 0), r2(34, 0);
  const StepResult a0 = step(alt_model, state, 0, r1);
  const StepResult s0 = step(minus_model, state, 0, r2);
  CHECK(a0.outcome == s0.outcome);
  CHECK(max_abs_diff(a0.next_state, s0.next_state) == 0.0);
  const StepResult a1 = step(alt_model, state, 1, r1);
  const StepResult s1 = step(plus_model, state, 0, r2);
  CHECK(a1.outcome == s1.outcome);
  CHECK(max_abs_diff(a1.next_state, s1.next_state) == 0.0);

  // Equal couplings collapse to the single model path for path.
  ModelConfig same = alt;
  same.c_plus = lowering();
  same.c_minus = lowering();
  ModelConfig single_cfg = benchmark_single(100);
  const TrajectoryRecord ra = simulate(build_model(same), 9, 1);
  const TrajectoryRecord rs = simulate(build_model(single_cfg), 9, 1);
  for (std::size_t k = 0; k < ra.states.size(); ++k) {
    CHECK(max_abs_diff(ra.states[k], rs.states[k]) == 0.0);
  }
}

TEST_CASE("memory_swap chain matches closed-form limits") {
  Mat h(4, 4);
  RngStream rng(35, 0);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) h(i, j) = cplx{rng.normal(), rng.normal()};
  h = ((h + h.adjoint()) * cplx{0.5, 0.0}).hermitized();

  ModelConfig cfg;
  cfg.kind = ModelKind::memory_swap;
  cfg.n = 64;
  cfg.hamiltonian = h;
  cfg.rho0 = ket0_density();

  // gamma = 0: never refresh, so rho_k is the k-step partial-trace channel.
  cfg.gamma = 0.0;
  const std::vector<Mat> frozen = evolve_memory_swap(build_model(cfg));
  Mat beta = Mat::zero(2, 2);
  beta(0, 0) = cplx{1.0, 0.0};
  for (int k = 0; k <= 64; ++k) {
    const Mat w = matrix_exp(h * cplx{0.0, -static_cast<double>(k) / 64.0});
    const Mat want = partial_trace_env(w * tensor_product(cfg.rho0, beta) * w.adjoint(), 2, 2);
    CHECK(max_abs_diff(frozen[k], want) <= 1e-12);
    CHECK(std::abs(frozen[k].trace().real() - 1.0) <= 1e-12);
    CHECK(validate_density(frozen[k], 1e-10).pass);
  }

  // Very fast refresh (keep probability ~ 0): the chain becomes the
  // one-step channel semigroup.
  cfg.gamma = 64.0 * 50.0;
  const std::vector<Mat> fast = evolve_memory_swap(build_model(cfg));
  const Mat w1 = matrix_exp(h * cplx{0.0, -1.0 / 64.0});
  Mat semi = cfg.rho0;
  for (int k = 1; k <= 10; ++k) {
    semi = partial_trace_env(w1 * tensor_product(semi, beta) * w1.adjoint(), 2, 2);
    CHECK(max_abs_diff(fast[k], semi) <= 1e-12);
  }

  // Deterministic: repeated evaluation is bitwise identical.
  const std::vector<Mat> again = evolve_memory_swap(build_model(cfg));
  for (int k = 0; k <= 64; ++k) CHECK(max_abs_diff(fast[k], again[k]) == 0.0);

  // Stochastic entry points reject the deterministic chain.
  const DiscreteModel model = build_model(cfg);
  CHECK_THROWS_AS(simulate(model, 1, 0), Error);
  RngStream r(36, 0);
  CHECK_THROWS_AS(step(model, cfg.rho0, 0, r), Error);
  CHECK_THROWS_AS(evolve_memory_swap(build_model(benchmark_single(10))), Error);
}

TEST_CASE("diagonal observables are rejected unless explicitly allowed") {
  ModelConfig cfg = benchmark_single(100);
  cfg.observable = pauli_z();
  CHECK_THROWS_AS(build_model(cfg), Error);
  try {
    build_model(cfg);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::assumption);
  }
  cfg.allow_diagonal_observable = true;
  const DiscreteModel model = build_model(cfg);
  CHECK(!model.has_constants);
  const TrajectoryRecord rec = simulate(model, 3, 0);
  for (const Mat& s : rec.states) CHECK(validate_density(s, 1e-10).pass);
}

TEST_CASE("simulation is reproducible from (seed, stream) and digests configs") {
  const DiscreteModel model = build_model(benchmark_single(150));
  const TrajectoryRecord a = simulate(model, 42, 5);
  const TrajectoryRecord b = simulate(model, 42, 5);
  const TrajectoryRecord c = simulate(model, 42, 6);
  REQUIRE(a.states.size() == b.states.size());
  for (std::size_t k = 0; k < a.states.size(); ++k) {
    CHECK(max_abs_diff(a.states[k], b.states[k]) == 0.0);
  }
  CHECK(a.outcomes == b.outcomes);
  CHECK(a.outcomes != c.outcomes);
  CHECK(a.model_digest == model.digest);

  const DiscreteModel other = build_model(benchmark_single(151));
  CHECK(other.digest != model.digest);

  // Invalid initial states are rejected up front.
  ModelConfig bad = benchmark_single(10);
  bad.rho0 = pauli_x();
  CHECK_THROWS_AS(build_model(bad), Error);
}

TEST_CASE("empirical increment mean is centered over many independent steps") {
  const DiscreteModel model = build_model(benchmark_single(50));
  RngStream state_rng(37, 0);
  const Mat state = random_density(state_rng);
  const int m = 10000;
  double sum = 0.0, sumsq = 0.0;
  for (int t = 0; t < m; ++t) {
    RngStream rng(99, static_cast<std::uint64_t>(t));
    const StepResult r = step(model, state, 0, rng);
    sum += r.x[0];
    sumsq += r.x[0] * r.x[0];
  }
  CHECK(std::abs(sum / m) <= 4.0 / std::sqrt(static_cast<double>(m)));
  CHECK(sumsq / m == doctest::Approx(1.0).epsilon(0.1));
}
