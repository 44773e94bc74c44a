// belavkin-lab: operator-expansion calculus and interaction-unitary builders.
//
// This module owns everything "order by order in 1/sqrt(n)": the first- and
// second-order derivative maps of the matrix exponential (phi/psi), their
// inversion used to reconstruct a generator from a unitary family, the
// repeated-interaction unitaries (two-level dilation, four-outcome noise
// coupling), and the measurement constants (gamma, alpha, beta, b_ij, B)
// derived from an environment observable.

#pragma once

#include <array>
#include <functional>
#include <vector>

#include "belavkin/linalg.hpp"
#include "belavkin/matrix.hpp"

namespace belavkin {

// -------------------------------------------------------------------------
// phi / psi — derivative maps of the exponential.
//
//   exp(X + eps*Y + eps^2*Z) = exp(X) * (I + eps*phi_X(Y)
//                                          + eps^2*(phi_X(Z) + psi_X(Y)))
//                            + O(eps^3),
//   phi_X(Y)  = integral_{0<=s<=1} exp(-sX) Y exp(sX) ds,
//   psi_X(Y)  = integral_{0<=r<=s<=1} exp(-sX) Y exp((s-r)X) Y exp(rX) ds dr.
// -------------------------------------------------------------------------

enum class PhiMethod { closed_form, quadrature };

// phi_X(Y). closed_form requires X = i*D with D Hermitian (defect <= 1e-8)
// and evaluates the integral exactly in the eigenbasis of D; quadrature uses
// 64-node Gauss-Legendre and works for any X.
Mat phi_op(const Mat& x, const Mat& y, PhiMethod method = PhiMethod::closed_form);

// psi_X(Y), nested Gauss-Legendre quadrature (64 outer, 32 inner nodes).
Mat psi_op(const Mat& x, const Mat& y);

// Inverse of phi_{iD} for Hermitian D: returns the unique W with
// phi_{iD}(W) = Y.  Requires that no pair of eigenvalues of D differs by a
// nonzero multiple of 2*pi; violations raise ErrorCode::resonance naming the
// offending eigenvalue pair.
Mat phi_inv(const Mat& d, const Mat& y);

// Residuals of the second-order expansion identity at each eps.
struct ExpansionCheck {
  std::vector<double> eps;
  std::vector<double> residuals;  // Frobenius norms
  LineFit fit;                    // log-residual vs log-eps
  bool degenerate = false;        // some residual at machine precision; fit unreliable
};

// Evaluates lhs = exp(X + eps Y + eps^2 Z) against the two-term expansion and
// fits the residual order.  eps values must lie in (0, 1/2] and there must be
// at least four of them.
ExpansionCheck expansion_check(const Mat& x, const Mat& y, const Mat& z,
                               const std::vector<double>& eps);

// -------------------------------------------------------------------------
// Generator reconstruction.
//
// Given the first three coefficient matrices of a unitary family
//   U(n) = U0 + n^{-1/2} U1 + n^{-1} U2 + O(n^{-3/2}),
// assumed to come from U(n) = exp(i(D + n^{-1/2} E + n^{-1} F)), recover
// (D, E, F).
// -------------------------------------------------------------------------

struct GeneratorTriple {
  Mat d, e, f;                    // Hermitian
  double hermiticity_defect = 0;  // worst defect before symmetrization
};

GeneratorTriple reconstruct_generator(const Mat& u0, const Mat& u1, const Mat& u2);

// Entrywise Richardson extrapolation in powers of x = n^{-1/2}: given values
// of a matrix family at exactly three n's, solve the Vandermonde system for
// the coefficients of 1, x, x^2.  Returns {u0, u1, u2}.
std::array<Mat, 3> richardson_coefficients(const std::vector<Mat>& samples,
                                           const std::vector<int>& ns);

// -------------------------------------------------------------------------
// Interaction unitaries.
// -------------------------------------------------------------------------

// Sign convention for the off-diagonal coupling of the two-level dilation:
// `standard` puts +C/sqrt(n) on the (1,0) environment block; `paper` is the
// same construction applied to the adjoint coupling operator.
enum class DilationConvention { standard, paper };

// One repeated-interaction unitary together with its block layout.  The
// composite space is ordered system-major: basis index = s*env_dim + e.
struct BlockUnitary {
  Mat matrix;       // (sys_dim*env_dim) x (sys_dim*env_dim)
  int sys_dim = 2;
  int env_dim = 2;
  int n = 1;        // interaction count the entries were scaled with

  // Extracts the system-space block U_{ij} (environment row i, column j).
  Mat block(int i, int j) const;

  // Populated by build_noise_unitary: deviation of the realized first
  // block-column from the requested one, after unitarization.
  double u00_residual = 0.0;       // ||U_00 - B_0||_F
  double coupling_residual = 0.0;  // max_i ||U_i0 - B_i||_F over i = 1..3
};

// U = exp(-i H0 (x) I /n + (C (x) E10 - C^dag (x) E01)/sqrt(n)) on C^2 (x) C^2.
// H0 must be Hermitian (defect <= 1e-10), C arbitrary 2x2.
BlockUnitary build_dilation_unitary(const Mat& h0, const Mat& c, int n,
                                    DilationConvention convention = DilationConvention::standard);

// Four-level environment coupling for a noise channel with Kraus operators
// K_1..K_3 at strength eps: the first block-column is prescribed as
//   B_0 = (1 + (1-eps)/(2n)) I,   B_i = sqrt(eps/n) K_i,
// completed to a full matrix by Gram-Schmidt and projected to the nearest
// unitary.  Requires n >= 4, 0 <= eps <= 1, and the prescribed block-column
// to have operator norm <= 1 + 1/n.  After projection the realized blocks
// must satisfy ||U_00 - B_0||_F <= 2/n and max_i ||U_i0 - B_i||_F
// <= 5/n^{3/2}; violations raise ErrorCode::construction.
BlockUnitary build_noise_unitary(const std::array<Mat, 3>& kraus, double eps, int n);

// The noise channel rho -> (1-eps) rho + eps sum_i K_i rho K_i^dag.
Mat noise_channel_apply(const std::array<Mat, 3>& kraus, double eps, const Mat& rho);

// -------------------------------------------------------------------------
// Measurement constants.
// -------------------------------------------------------------------------

enum class ConstantsModel { single, noise };

// Outcome labeling shared by derive_constants and the trajectory stepper:
// for a two-outcome observable, outcome 0 is the *largest* eigenvalue; for a
// four-outcome observable outcomes follow the ascending eigenvalue order.
std::vector<Mat> projectors_in_outcome_order(const Observable& a);

struct DerivedConstants {
  ConstantsModel model = ConstantsModel::single;

  // Two-outcome model.
  cplx gamma{0.0, 0.0};
  double alpha = 0.0;

  // Four-outcome model (indices i, a run over 1..3, stored 0-based).
  std::array<double, 3> beta{};                     // sqrt(p00_i (1 - p00_i))
  std::array<std::array<cplx, 3>, 3> gamma_ai{};    // gamma_ai[i][a]
  std::array<std::array<double, 3>, 3> b_ij{};      // off-diagonal, diag 0
  Mat covariance;                                   // B: diag 1, off-diag -b_ij
  Mat covariance_sqrt;                              // PSD square root of B
};

// Derives the model constants from an environment observable.  `single`
// requires a 2x2 observable with two distinct eigenvalues; `noise` a 4x4
// observable with four distinct eigenvalues.  Observables diagonal in the
// environment reference basis (vanishing p00*(1-p00)) raise
// ErrorCode::assumption; an indefinite covariance B raises
// ErrorCode::covariance.
DerivedConstants derive_constants(const Observable& a, ConstantsModel model);

}  // namespace belavkin
