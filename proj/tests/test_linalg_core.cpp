// Unit tests: dense matrix kernel, spectral decompositions, density checks.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "belavkin/linalg.hpp"
#include "belavkin/matrix.hpp"
#include "belavkin/rng.hpp"

using namespace belavkin;

namespace {

Mat random_matrix(RngStream& rng, int r, int c, double scale = 1.0) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      m(i, j) = cplx(rng.normal(), rng.normal()) * scale;
  return m;
}

Mat random_hermitian(RngStream& rng, int d, double scale = 1.0) {
  return random_matrix(rng, d, d, scale).hermitized();
}

Mat random_density(RngStream& rng, int d) {
  Mat g = random_matrix(rng, d, d);
  Mat rho = g * g.adjoint();
  return rho * (1.0 / rho.trace().real());
}

}  // namespace

TEST_CASE("tensor product basics") {
  const Mat i2 = Mat::identity(2);
  CHECK(max_abs_diff(tensor_product(i2, i2), Mat::identity(4)) == 0.0);

  // sigma_x (x) e0 e0^dag places sigma_x entries on the (0,0) environment block
  const Mat beta = matrix_unit(2, 0, 0);
  const Mat t = tensor_product(pauli_x(), beta);
  CHECK(t(0, 2) == cplx(1.0, 0.0));
  CHECK(t(2, 0) == cplx(1.0, 0.0));
  CHECK(t(0, 0) == cplx(0.0, 0.0));
  CHECK(t(1, 3) == cplx(0.0, 0.0));

  // mixed-product identity (A(x)B)(C(x)D) = AC (x) BD on random 2x2 factors
  RngStream rng(7, 0);
  for (int rep = 0; rep < 5; ++rep) {
    const Mat a = random_matrix(rng, 2, 2), b = random_matrix(rng, 2, 2);
    const Mat c = random_matrix(rng, 2, 2), d = random_matrix(rng, 2, 2);
    CHECK(max_abs_diff(tensor_product(a, b) * tensor_product(c, d),
                       tensor_product(a * c, b * d)) <= 1e-12);
  }
}

TEST_CASE("partial trace over the environment") {
  RngStream rng(11, 0);
  const Mat beta = matrix_unit(2, 0, 0);

  // product state: recover the system factor exactly
  for (int rep = 0; rep < 5; ++rep) {
    const Mat rho = random_density(rng, 2);
    CHECK(max_abs_diff(partial_trace_env(tensor_product(rho, beta), 2, 2), rho) <=
          1e-14);
  }

  // Bell state reduces to the maximally mixed state
  Mat bell(4, 4);
  for (int i : {0, 3})
    for (int j : {0, 3}) bell(i, j) = 0.5;
  CHECK(max_abs_diff(partial_trace_env(bell, 2, 2), Mat::identity(2) * 0.5) <=
        1e-14);

  // defining identity Tr[D rho1] = Tr[(D (x) I) rho] for random D
  const Mat rho = random_density(rng, 4);
  const Mat rho1 = partial_trace_env(rho, 2, 2);
  for (int rep = 0; rep < 20; ++rep) {
    const Mat d = random_matrix(rng, 2, 2);
    const cplx lhs = (d * rho1).trace();
    const cplx rhs = (tensor_product(d, Mat::identity(2)) * rho).trace();
    CHECK(std::abs(lhs - rhs) <= 1e-12);
  }
}

TEST_CASE("hermitian spectral decomposition") {
  // sigma_x: eigenvalues -1, +1 with projectors (I -+ sigma_x)/2
  const Observable sx = hermitian_spectral(pauli_x());
  REQUIRE(sx.outcomes() == 2);
  CHECK(sx.spectrum[0].eigenvalue == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(sx.spectrum[1].eigenvalue == doctest::Approx(1.0).epsilon(1e-12));
  const Mat p_minus = (Mat::identity(2) - pauli_x()) * 0.5;
  const Mat p_plus = (Mat::identity(2) + pauli_x()) * 0.5;
  CHECK(max_abs_diff(sx.spectrum[0].projector, p_minus) <= 1e-12);
  CHECK(max_abs_diff(sx.spectrum[1].projector, p_plus) <= 1e-12);

  // fully degenerate input merges into a single projector
  const Observable id4 = hermitian_spectral(Mat::identity(4));
  REQUIRE(id4.outcomes() == 1);
  CHECK(id4.spectrum[0].eigenvalue == doctest::Approx(1.0));
  CHECK(max_abs_diff(id4.spectrum[0].projector, Mat::identity(4)) <= 1e-10);

  // random Hermitian reconstruction + projector algebra
  RngStream rng(13, 0);
  for (int rep = 0; rep < 10; ++rep) {
    const Mat h = random_hermitian(rng, 4);
    const Observable obs = hermitian_spectral(h);
    Mat recon(4, 4), psum(4, 4);
    for (const auto& ep : obs.spectrum) {
      recon += ep.projector * ep.eigenvalue;
      psum += ep.projector;
      CHECK(max_abs_diff(ep.projector * ep.projector, ep.projector) <= 1e-10);
      CHECK(ep.projector.hermiticity_defect() <= 1e-12);
    }
    CHECK(max_abs_diff(recon, h) <= 1e-10);
    CHECK(max_abs_diff(psum, Mat::identity(4)) <= 1e-10);
    // orthogonality across distinct projectors
    for (size_t i = 0; i < obs.spectrum.size(); ++i)
      for (size_t j = i + 1; j < obs.spectrum.size(); ++j)
        CHECK((obs.spectrum[i].projector * obs.spectrum[j].projector).max_abs() <=
              1e-10);
  }

  CHECK_THROWS_AS(hermitian_spectral(random_matrix(rng, 3, 3)), Error);
}

TEST_CASE("matrix exponential") {
  CHECK(max_abs_diff(matrix_exp(Mat(3, 3)), Mat::identity(3)) == 0.0);

  // exp(i pi sigma_x) = -I (closed form cos + i sin)
  const Mat ipx = pauli_x() * cplx(0.0, M_PI);
  CHECK(max_abs_diff(matrix_exp(ipx), Mat::identity(2) * (-1.0)) <= 1e-13);

  RngStream rng(17, 0);
  for (int rep = 0; rep < 8; ++rep) {
    const Mat a = random_matrix(rng, 4, 4, 0.5);  // ||a|| <= ~2
    CHECK(max_abs_diff(matrix_exp(a) * matrix_exp(-a), Mat::identity(4)) <=
          1e-12);
    CHECK(max_abs_diff(matrix_exp(a.adjoint()), matrix_exp(a).adjoint()) <=
          1e-12);
  }

  // large-norm accuracy via the scalar 2x2 closed form exp(theta sigma_x)
  const double theta = 25.0;
  const Mat big = matrix_exp(pauli_x() * theta);
  const double ch = std::cosh(theta), sh = std::sinh(theta);
  CHECK(std::abs(big(0, 0).real() - ch) / ch <= 1e-12);
  CHECK(std::abs(big(0, 1).real() - sh) / sh <= 1e-12);
}

TEST_CASE("nearest unitary (polar factor)") {
  RngStream rng(19, 0);

  // fixed point on unitary input
  const Mat v = matrix_exp(random_hermitian(rng, 3) * cplx(0.0, 1.0));
  CHECK(max_abs_diff(nearest_unitary(v), v) <= 1e-12);

  // positive diagonal collapses to the identity
  const Mat d = Mat::from_rows({{2.0, 0.0}, {0.0, 1.0}});
  CHECK(max_abs_diff(nearest_unitary(d), Mat::identity(2)) <= 1e-12);

  for (int rep = 0; rep < 6; ++rep) {
    const Mat m = random_matrix(rng, 4, 4) + Mat::identity(4) * 3.0;
    const Mat u = nearest_unitary(m);
    CHECK(max_abs_diff(u.adjoint() * u, Mat::identity(4)) <= 1e-12);
    // idempotence
    CHECK(max_abs_diff(nearest_unitary(u), u) <= 1e-12);
    // U is never beaten by random sampled unitaries in Frobenius distance
    const double best = (m - u).fnorm();
    for (int s = 0; s < 40; ++s) {
      const Mat w =
          matrix_exp(random_hermitian(rng, 4, 0.7) * cplx(0.0, 1.0));
      CHECK((m - w).fnorm() + 1e-12 >= best);
    }
  }

  CHECK_THROWS_AS(nearest_unitary(Mat(2, 2)), Error);
}

TEST_CASE("psd square root") {
  CHECK(max_abs_diff(psd_sqrt(Mat::identity(3)), Mat::identity(3)) <= 1e-13);

  // covariance pattern: 1 on the diagonal, -1/3 off-diagonal
  Mat b(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) b(i, j) = (i == j) ? 1.0 : -1.0 / 3.0;
  const EigH eb = eig_hermitian(b);
  CHECK(eb.values[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(eb.values[1] == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
  CHECK(eb.values[2] == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
  const Mat r = psd_sqrt(b);
  CHECK(max_abs_diff(r * r, b) <= 1e-10);
  const EigH er = eig_hermitian(r);
  CHECK(er.values[0] == doctest::Approx(std::sqrt(1.0 / 3.0)).epsilon(1e-12));
  CHECK(er.values[2] == doctest::Approx(std::sqrt(4.0 / 3.0)).epsilon(1e-12));

  RngStream rng(23, 0);
  for (int rep = 0; rep < 6; ++rep) {
    const Mat g = random_matrix(rng, 4, 4);
    const Mat psd = g * g.adjoint();
    const Mat s = psd_sqrt(psd);
    CHECK(max_abs_diff(s * s, psd) <= 1e-10);
    CHECK(s.hermiticity_defect() <= 1e-12);
  }

  CHECK_THROWS_AS(psd_sqrt(pauli_z()), Error);  // eigenvalue -1
}

TEST_CASE("density validation and repair") {
  CHECK(validate_density(Mat::identity(2) * 0.5).pass);

  const DensityReport bad = validate_density(pauli_x());
  CHECK_FALSE(bad.pass);
  CHECK_FALSE(bad.trace_ok);
  CHECK_FALSE(bad.psd_ok);
  CHECK(bad.violations.size() == 2);

  // V diag(0.7, 0.3) V^dag is a density by construction
  RngStream rng(29, 0);
  for (int rep = 0; rep < 5; ++rep) {
    const Mat v = matrix_exp(random_hermitian(rng, 2) * cplx(0.0, 1.0));
    const Mat rho = v * Mat::from_rows({{0.7, 0.0}, {0.0, 0.3}}) * v.adjoint();
    CHECK(validate_density(rho).pass);
    // repair is idempotent on valid densities
    CHECK(max_abs_diff(psd_repair(rho), rho) <= 1e-12);
  }

  // clip-and-renormalise by hand
  const Mat fixed = psd_repair(Mat::from_rows({{1.1, 0.0}, {0.0, -0.1}}));
  CHECK(max_abs_diff(fixed, Mat::from_rows({{1.0, 0.0}, {0.0, 0.0}})) <= 1e-12);

  // repaired output always validates (at relaxed tolerance)
  for (int rep = 0; rep < 10; ++rep) {
    Mat noisy = random_density(rng, 2) + random_hermitian(rng, 2, 0.05);
    CHECK(validate_density(psd_repair(noisy), 1e-10).pass);
  }
}

TEST_CASE("unitary eigendecomposition handles degenerate cosines") {
  // diag(e^{i a}, e^{-i a}) conjugated: cos-angles collide, signs differ
  RngStream rng(31, 0);
  const double a = 1.1;
  Mat d(2, 2);
  d(0, 0) = std::polar(1.0, a);
  d(1, 1) = std::polar(1.0, -a);
  const Mat w = matrix_exp(random_hermitian(rng, 2) * cplx(0.0, 1.0));
  const Mat u = w * d * w.adjoint();
  const EigU eu = eig_unitary(u);
  Mat recon(2, 2);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        recon(i, j) += std::polar(1.0, eu.angles[c]) * eu.vectors(i, c) *
                       std::conj(eu.vectors(j, c));
  CHECK(max_abs_diff(recon, u) <= 1e-10);
}

TEST_CASE("line fit recovers exact slopes") {
  const std::vector<double> x = {0.0, 1.0, 2.0, 3.0};
  const std::vector<double> y = {1.0, 3.0, 5.0, 7.0};
  const LineFit f = fit_line(x, y);
  CHECK(f.slope == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(f.intercept == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f.residual_rms <= 1e-12);
}
