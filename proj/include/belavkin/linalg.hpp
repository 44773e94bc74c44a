// belavkin-lab: spectral decompositions, matrix functions and density checks.
#pragma once

#include <string>
#include <vector>

#include "belavkin/matrix.hpp"

namespace belavkin {

// Hermitian eigendecomposition, eigenvalues ascending, eigenvectors as the
// columns of `vectors` (m = V diag(values) V^dagger). Cyclic complex Jacobi:
// robust and dependency-free for the dimensions (<= 16) used here.
struct EigH {
  std::vector<double> values;
  Mat vectors;
};
EigH eig_hermitian(const Mat& m);

// One spectral projector of an observable after degeneracy merging.
struct EigenProjector {
  double eigenvalue = 0.0;
  Mat projector;
};

// Hermitian matrix with its cached spectral decomposition A = sum l_j P_j.
struct Observable {
  Mat matrix;
  std::vector<EigenProjector> spectrum;  // ascending eigenvalues, merged
  int dim() const { return matrix.rows(); }
  int outcomes() const { return static_cast<int>(spectrum.size()); }
};

// Spectral decomposition with eigenvalues within degeneracy_tol merged into a
// single projector. Requires ||m - m^dagger||_max <= 1e-10.
Observable hermitian_spectral(const Mat& m, double degeneracy_tol = 1e-9);

// exp(m) by scaling-and-squaring with a truncated Taylor core; accurate to
// ~1e-13 relative for ||m|| <= 50.
Mat matrix_exp(const Mat& m);

// Polar factor U of m = U P (P Hermitian PSD); the closest unitary to m in
// Frobenius distance. Throws on (numerically) rank-deficient input.
Mat nearest_unitary(const Mat& m);

// Hermitian PSD square root; eigenvalues in [-1e-10, 0) are clipped to 0,
// below -1e-6 the input is rejected as genuinely not PSD.
Mat psd_sqrt(const Mat& b);

// Density-operator validation report. The three invariants are checked at
// hermitian/trace tolerance `tol` and PSD tolerance 100*tol (dust allowance):
// the defaults give 1e-12 / 1e-12 / -1e-10.
struct DensityReport {
  double hermiticity_defect = 0.0;
  double trace_defect = 0.0;
  double min_eigenvalue = 0.0;
  double tol = 0.0;
  double psd_tol = 0.0;
  bool hermitian_ok = false;
  bool trace_ok = false;
  bool psd_ok = false;
  bool pass = false;
  std::vector<std::string> violations;
  std::string summary() const;
};
DensityReport validate_density(const Mat& m, double tol = 1e-12);

// Clip negative eigenvalues to zero and renormalise the trace to one.
// Idempotent on valid densities; opt-in stabilisation for Euler-Maruyama
// paths only (the discrete chains never need it).
Mat psd_repair(const Mat& m);

// Eigen-structure of a unitary: u = V diag(exp(i*angles)) V^dagger with
// angles in (-pi, pi]. Computed via the commuting Hermitian parts, which
// keeps degenerate unitary eigenvalues (cos-theta collisions) stable.
struct EigU {
  std::vector<double> angles;
  Mat vectors;
};
EigU eig_unitary(const Mat& u);

// Ordinary least squares y ~ intercept + slope * x on given points.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual_rms = 0.0;     // RMS of fit residuals
  double slope_halfwidth = 0.0;  // ~95% half-width from residual scatter
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace belavkin
