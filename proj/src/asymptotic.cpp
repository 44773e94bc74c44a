#include "belavkin/asymptotic.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "belavkin/errors.hpp"

namespace belavkin {
namespace {

constexpr double kPi = 3.14159265358979323846;

// Gauss-Legendre nodes/weights on [0, 1], computed once per order by Newton
// iteration on the Legendre polynomial.
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

GaussRule make_gauss_rule(int order) {
  GaussRule rule;
  rule.nodes.resize(order);
  rule.weights.resize(order);
  for (int i = 0; i < order; ++i) {
    // Initial guess (Chebyshev-like) for the i-th root on [-1, 1].
    double x = std::cos(kPi * (i + 0.75) / (order + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      // Evaluate P_order(x) and derivative by recurrence.
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= order; ++k) {
        double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = order * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    // Map from [-1, 1] to [0, 1]; roots come out in descending order.
    rule.nodes[order - 1 - i] = 0.5 * (1.0 + x);
    rule.weights[order - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
  }
  return rule;
}

const GaussRule& gauss64() {
  static const GaussRule rule = make_gauss_rule(64);
  return rule;
}

const GaussRule& gauss32() {
  static const GaussRule rule = make_gauss_rule(32);
  return rule;
}

// Requires x = i*D with D Hermitian; returns D.
Mat hermitian_generator_of(const Mat& x, const char* who) {
  Mat d = x * cplx{0.0, -1.0};
  if (d.hermiticity_defect() > 1e-8) {
    throw Error(ErrorCode::validation,
                std::string(who) + ": closed form requires X = i*D with D Hermitian "
                "(defect " + std::to_string(d.hermiticity_defect()) + ")");
  }
  return d.hermitized();
}

// The closed-form phi coefficient for an eigenvalue gap delta = lam_l - lam_k:
//   integral_0^1 exp(i*s*delta) ds = (exp(i*delta) - 1) / (i*delta).
cplx phi_coefficient(double delta) {
  if (std::abs(delta) < 1e-12) return cplx{1.0, 0.0};
  const cplx i_delta{0.0, delta};
  return (std::exp(i_delta) - cplx{1.0, 0.0}) / i_delta;
}

}  // namespace

Mat phi_op(const Mat& x, const Mat& y, PhiMethod method) {
  if (x.rows() != x.cols() || y.rows() != y.cols() || x.rows() != y.rows()) {
    throw Error(ErrorCode::dimension, "phi_op: X and Y must be square and equal size");
  }
  if (method == PhiMethod::quadrature) {
    const GaussRule& rule = gauss64();
    Mat acc = Mat::zero(x.rows(), x.cols());
    for (std::size_t s = 0; s < rule.nodes.size(); ++s) {
      const Mat left = matrix_exp(x * cplx{-rule.nodes[s], 0.0});
      const Mat right = matrix_exp(x * cplx{rule.nodes[s], 0.0});
      acc += left * y * right * cplx{rule.weights[s], 0.0};
    }
    return acc;
  }
  const Mat d = hermitian_generator_of(x, "phi_op");
  const EigH eig = eig_hermitian(d);
  const Mat y_tilde = eig.vectors.adjoint() * y * eig.vectors;
  Mat scaled = Mat::zero(d.rows(), d.cols());
  for (int k = 0; k < d.rows(); ++k) {
    for (int l = 0; l < d.cols(); ++l) {
      scaled(k, l) = y_tilde(k, l) * phi_coefficient(eig.values[l] - eig.values[k]);
    }
  }
  return eig.vectors * scaled * eig.vectors.adjoint();
}

Mat psi_op(const Mat& x, const Mat& y) {
  if (x.rows() != x.cols() || y.rows() != y.cols() || x.rows() != y.rows()) {
    throw Error(ErrorCode::dimension, "psi_op: X and Y must be square and equal size");
  }
  const GaussRule& outer = gauss64();
  const GaussRule& inner = gauss32();
  Mat acc = Mat::zero(x.rows(), x.cols());
  for (std::size_t si = 0; si < outer.nodes.size(); ++si) {
    const double s = outer.nodes[si];
    const Mat left = matrix_exp(x * cplx{-s, 0.0});
    Mat inner_acc = Mat::zero(x.rows(), x.cols());
    for (std::size_t ri = 0; ri < inner.nodes.size(); ++ri) {
      const double r = s * inner.nodes[ri];  // integrate r over [0, s]
      const Mat mid = matrix_exp(x * cplx{s - r, 0.0});
      const Mat right = matrix_exp(x * cplx{r, 0.0});
      inner_acc += y * mid * y * right * cplx{s * inner.weights[ri], 0.0};
    }
    acc += left * inner_acc * cplx{outer.weights[si], 0.0};
  }
  return acc;
}

Mat phi_inv(const Mat& d, const Mat& y) {
  if (d.rows() != d.cols() || y.rows() != y.cols() || d.rows() != y.rows()) {
    throw Error(ErrorCode::dimension, "phi_inv: D and Y must be square and equal size");
  }
  if (d.hermiticity_defect() > 1e-8) {
    throw Error(ErrorCode::validation, "phi_inv: D must be Hermitian");
  }
  const EigH eig = eig_hermitian(d.hermitized());
  const int n = d.rows();
  Mat coeff = Mat::zero(n, n);
  for (int k = 0; k < n; ++k) {
    for (int l = 0; l < n; ++l) {
      const cplx g = phi_coefficient(eig.values[l] - eig.values[k]);
      if (std::abs(g) <= 1e-8) {
        std::ostringstream msg;
        msg << "phi_inv: resonance between eigenvalues " << eig.values[k] << " and "
            << eig.values[l] << " (gap within 1e-8 of a nonzero multiple of 2*pi); "
            << "the first-order map is not invertible";
        throw Error(ErrorCode::resonance, msg.str());
      }
      coeff(k, l) = g;
    }
  }
  const Mat y_tilde = eig.vectors.adjoint() * y * eig.vectors;
  Mat solved = Mat::zero(n, n);
  for (int k = 0; k < n; ++k) {
    for (int l = 0; l < n; ++l) {
      solved(k, l) = y_tilde(k, l) / coeff(k, l);
    }
  }
  return eig.vectors * solved * eig.vectors.adjoint();
}

ExpansionCheck expansion_check(const Mat& x, const Mat& y, const Mat& z,
                               const std::vector<double>& eps) {
  if (eps.size() < 4) {
    throw Error(ErrorCode::config, "expansion_check: need at least four eps values");
  }
  for (double e : eps) {
    if (!(e > 0.0) || e > 0.5) {
      throw Error(ErrorCode::config, "expansion_check: eps values must lie in (0, 1/2]");
    }
  }
  ExpansionCheck out;
  out.eps = eps;
  const Mat expx = matrix_exp(x);
  const Mat identity = Mat::identity(x.rows());
  const Mat phi_y = phi_op(x, y, PhiMethod::quadrature);
  const Mat phi_z = phi_op(x, z, PhiMethod::quadrature);
  const Mat psi_y = psi_op(x, y);
  std::vector<double> lx, ly;
  for (double e : eps) {
    const Mat lhs = matrix_exp(x + y * cplx{e, 0.0} + z * cplx{e * e, 0.0});
    const Mat rhs = expx * (identity + phi_y * cplx{e, 0.0} +
                            (phi_z + psi_y) * cplx{e * e, 0.0});
    const double r = (lhs - rhs).fnorm();
    out.residuals.push_back(r);
    if (r < 1e-14) {
      out.degenerate = true;
    } else {
      lx.push_back(std::log(e));
      ly.push_back(std::log(r));
    }
  }
  if (lx.size() >= 2) {
    out.fit = fit_line(lx, ly);
  }
  return out;
}

GeneratorTriple reconstruct_generator(const Mat& u0, const Mat& u1, const Mat& u2) {
  const int n = u0.rows();
  if (u0.cols() != n || u1.rows() != n || u1.cols() != n || u2.rows() != n || u2.cols() != n) {
    throw Error(ErrorCode::dimension, "reconstruct_generator: inputs must be square, equal size");
  }
  const Mat gram_defect = u0.adjoint() * u0 - Mat::identity(n);
  if (gram_defect.max_abs() > 1e-8) {
    throw Error(ErrorCode::validation,
                "reconstruct_generator: leading coefficient is not unitary within 1e-8");
  }

  EigU eig = eig_unitary(u0);
  // Branch alignment: eigenvalue angles that coincide on the unit circle must
  // use the same logarithm branch, otherwise D picks up spurious 2*pi jumps.
  for (std::size_t k = 0; k < eig.angles.size(); ++k) {
    for (std::size_t l = k + 1; l < eig.angles.size(); ++l) {
      const cplx ek = std::exp(cplx{0.0, eig.angles[k]});
      const cplx el = std::exp(cplx{0.0, eig.angles[l]});
      if (std::abs(ek - el) <= 1e-8 && std::abs(eig.angles[k] - eig.angles[l]) > 1e-8) {
        eig.angles[l] = eig.angles[k];
      }
    }
  }
  Mat d = Mat::zero(n, n);
  for (int k = 0; k < n; ++k) d(k, k) = cplx{eig.angles[k], 0.0};
  d = (eig.vectors * d * eig.vectors.adjoint()).hermitized();

  GeneratorTriple out;
  // U0^dag U1 = phi_{iD}(iE) and U0^dag U2 = phi_{iD}(iF) + psi_{iD}(iE).
  const Mat v1 = u0.adjoint() * u1;
  const Mat e_raw = phi_inv(d, v1) * cplx{0.0, -1.0};
  const Mat i_d = d * cplx{0.0, 1.0};
  const Mat v2 = u0.adjoint() * u2 - psi_op(i_d, e_raw * cplx{0.0, 1.0});
  const Mat f_raw = phi_inv(d, v2) * cplx{0.0, -1.0};

  out.hermiticity_defect = std::max({d.hermiticity_defect(), e_raw.hermiticity_defect(),
                                     f_raw.hermiticity_defect()});
  out.d = d;
  out.e = e_raw.hermitized();
  out.f = f_raw.hermitized();
  return out;
}

std::array<Mat, 3> richardson_coefficients(const std::vector<Mat>& samples,
                                           const std::vector<int>& ns) {
  if (samples.size() != 3 || ns.size() != 3) {
    throw Error(ErrorCode::config, "richardson_coefficients: exactly three levels required");
  }
  const int dim = samples[0].rows();
  for (const Mat& m : samples) {
    if (m.rows() != dim || m.cols() != dim) {
      throw Error(ErrorCode::dimension, "richardson_coefficients: inconsistent sample sizes");
    }
  }
  // Solve the 3x3 Vandermonde system in x_i = n_i^{-1/2} entrywise.
  double x[3];
  for (int i = 0; i < 3; ++i) {
    if (ns[i] <= 0) throw Error(ErrorCode::config, "richardson_coefficients: n must be positive");
    x[i] = 1.0 / std::sqrt(static_cast<double>(ns[i]));
  }
  // Inverse of the Vandermonde via Lagrange: coefficient extraction.
  std::array<Mat, 3> out{Mat::zero(dim, dim), Mat::zero(dim, dim), Mat::zero(dim, dim)};
  for (int i = 0; i < 3; ++i) {
    // Lagrange basis polynomial L_i(t) = prod_{j!=i} (t - x_j)/(x_i - x_j),
    // expanded as c0 + c1 t + c2 t^2.
    double denom = 1.0;
    double roots[2];
    int r = 0;
    for (int j = 0; j < 3; ++j) {
      if (j == i) continue;
      denom *= (x[i] - x[j]);
      roots[r++] = x[j];
    }
    const double c2 = 1.0 / denom;
    const double c1 = -(roots[0] + roots[1]) / denom;
    const double c0 = roots[0] * roots[1] / denom;
    out[0] += samples[i] * cplx{c0, 0.0};
    out[1] += samples[i] * cplx{c1, 0.0};
    out[2] += samples[i] * cplx{c2, 0.0};
  }
  return out;
}

Mat BlockUnitary::block(int i, int j) const {
  if (i < 0 || i >= env_dim || j < 0 || j >= env_dim) {
    throw Error(ErrorCode::dimension, "BlockUnitary::block: environment index out of range");
  }
  Mat out = Mat::zero(sys_dim, sys_dim);
  for (int s = 0; s < sys_dim; ++s) {
    for (int t = 0; t < sys_dim; ++t) {
      out(s, t) = matrix(s * env_dim + i, t * env_dim + j);
    }
  }
  return out;
}

BlockUnitary build_dilation_unitary(const Mat& h0, const Mat& c, int n,
                                    DilationConvention convention) {
  if (h0.rows() != 2 || h0.cols() != 2 || c.rows() != 2 || c.cols() != 2) {
    throw Error(ErrorCode::dimension, "build_dilation_unitary: H0 and C must be 2x2");
  }
  if (h0.hermiticity_defect() > 1e-10) {
    throw Error(ErrorCode::validation, "build_dilation_unitary: H0 must be Hermitian");
  }
  if (n < 1) {
    throw Error(ErrorCode::config, "build_dilation_unitary: n must be >= 1");
  }
  const Mat c_eff = (convention == DilationConvention::paper) ? c.adjoint() : c;
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
  Mat gen = tensor_product(h0, Mat::identity(2)) * cplx{0.0, -1.0 / n};
  gen += tensor_product(c_eff, matrix_unit(2, 1, 0)) * cplx{inv_sqrt_n, 0.0};
  gen -= tensor_product(c_eff.adjoint(), matrix_unit(2, 0, 1)) * cplx{inv_sqrt_n, 0.0};
  BlockUnitary out;
  out.matrix = matrix_exp(gen);
  out.sys_dim = 2;
  out.env_dim = 2;
  out.n = n;
  return out;
}

BlockUnitary build_noise_unitary(const std::array<Mat, 3>& kraus, double eps, int n) {
  for (const Mat& k : kraus) {
    if (k.rows() != 2 || k.cols() != 2) {
      throw Error(ErrorCode::dimension, "build_noise_unitary: Kraus operators must be 2x2");
    }
  }
  if (!(eps >= 0.0 && eps <= 1.0)) {
    throw Error(ErrorCode::config, "build_noise_unitary: eps must lie in [0, 1]");
  }
  if (n < 4) {
    throw Error(ErrorCode::config, "build_noise_unitary: n must be >= 4");
  }
  constexpr int kEnv = 4;
  constexpr int kDim = 2 * kEnv;

  // Prescribed first block-column (environment column 0).
  std::array<Mat, 4> col;
  col[0] = Mat::identity(2) * cplx{1.0 + (1.0 - eps) / (2.0 * n), 0.0};
  const double coupling = std::sqrt(eps / n);
  for (int i = 1; i < 4; ++i) col[i] = kraus[i - 1] * cplx{coupling, 0.0};

  // Stack into the two specified composite columns (system column s', env 0).
  Mat v0 = Mat::zero(kDim, 2);
  for (int sp = 0; sp < 2; ++sp) {
    for (int i = 0; i < kEnv; ++i) {
      for (int s = 0; s < 2; ++s) {
        v0(s * kEnv + i, sp) = col[i](s, sp);
      }
    }
  }

  // Precondition: operator norm of the prescribed block-column <= 1 + 1/n.
  const Mat gram = v0.adjoint() * v0;
  const EigH gram_eig = eig_hermitian(gram.hermitized());
  const double sigma_max = std::sqrt(std::max(0.0, gram_eig.values.back()));
  if (sigma_max > 1.0 + 1.0 / n) {
    throw Error(ErrorCode::validation,
                "build_noise_unitary: prescribed block-column has norm " +
                std::to_string(sigma_max) + " > 1 + 1/n");
  }

  // Orthonormal copy of the specified columns, used only to project the
  // completion candidates; the specified columns themselves stay untouched so
  // the polar step sees exactly the prescribed data.
  Mat gram_isq = Mat::zero(2, 2);
  for (int k = 0; k < 2; ++k) {
    if (gram_eig.values[k] <= 1e-12) {
      throw Error(ErrorCode::construction, "build_noise_unitary: prescribed columns are degenerate");
    }
  }
  {
    Mat w = Mat::zero(2, 2);
    for (int k = 0; k < 2; ++k) w(k, k) = cplx{1.0 / std::sqrt(gram_eig.values[k]), 0.0};
    gram_isq = gram_eig.vectors * w * gram_eig.vectors.adjoint();
  }
  const Mat q0 = v0 * gram_isq;  // kDim x 2, orthonormal columns

  // Gram-Schmidt completion over the canonical basis, filling the remaining
  // six composite columns (system s', environment j >= 1) in order.
  Mat full = Mat::zero(kDim, kDim);
  for (int sp = 0; sp < 2; ++sp) {
    for (int s = 0; s < 2; ++s) {
      for (int i = 0; i < kEnv; ++i) {
        full(s * kEnv + i, sp * kEnv + 0) = v0(s * kEnv + i, sp);
      }
    }
  }
  std::vector<std::array<cplx, kDim>> ortho;  // accumulated orthonormal completion
  int next_slot = 0;                          // composite column slots with env j >= 1
  std::array<int, 6> slots{};
  {
    int t = 0;
    for (int sp = 0; sp < 2; ++sp) {
      for (int j = 1; j < kEnv; ++j) slots[t++] = sp * kEnv + j;
    }
  }
  for (int cand = 0; cand < kDim && next_slot < 6; ++cand) {
    std::array<cplx, kDim> v{};
    v[cand] = cplx{1.0, 0.0};
    // Project out the specified subspace.
    for (int col_q = 0; col_q < 2; ++col_q) {
      cplx overlap{0.0, 0.0};
      for (int r = 0; r < kDim; ++r) overlap += std::conj(q0(r, col_q)) * v[r];
      for (int r = 0; r < kDim; ++r) v[r] -= overlap * q0(r, col_q);
    }
    // Project out previously accepted completion vectors.
    for (const auto& u : ortho) {
      cplx overlap{0.0, 0.0};
      for (int r = 0; r < kDim; ++r) overlap += std::conj(u[r]) * v[r];
      for (int r = 0; r < kDim; ++r) v[r] -= overlap * u[r];
    }
    double norm2 = 0.0;
    for (int r = 0; r < kDim; ++r) norm2 += std::norm(v[r]);
    if (norm2 < 0.25) continue;  // candidate (numerically) inside the span already
    const double inv_norm = 1.0 / std::sqrt(norm2);
    for (int r = 0; r < kDim; ++r) v[r] *= inv_norm;
    ortho.push_back(v);
    for (int r = 0; r < kDim; ++r) full(r, slots[next_slot]) = v[r];
    ++next_slot;
  }
  if (next_slot != 6) {
    throw Error(ErrorCode::construction, "build_noise_unitary: completion basis is rank-deficient");
  }

  BlockUnitary out;
  out.matrix = nearest_unitary(full);
  out.sys_dim = 2;
  out.env_dim = kEnv;
  out.n = n;

  out.u00_residual = (out.block(0, 0) - col[0]).fnorm();
  double worst = 0.0;
  for (int i = 1; i < kEnv; ++i) {
    worst = std::max(worst, (out.block(i, 0) - col[i]).fnorm());
  }
  out.coupling_residual = worst;
  const double coupling_bound = 5.0 / (static_cast<double>(n) * std::sqrt(static_cast<double>(n)));
  if (out.coupling_residual > coupling_bound) {
    throw Error(ErrorCode::construction,
                "build_noise_unitary: coupling blocks deviate by " +
                std::to_string(out.coupling_residual) + " > 5/n^(3/2)");
  }
  if (out.u00_residual > 2.0 / n) {
    throw Error(ErrorCode::construction,
                "build_noise_unitary: U_00 deviates by " + std::to_string(out.u00_residual) +
                " > 2/n");
  }
  return out;
}

Mat noise_channel_apply(const std::array<Mat, 3>& kraus, double eps, const Mat& rho) {
  Mat out = rho * cplx{1.0 - eps, 0.0};
  for (const Mat& k : kraus) {
    out += k * rho * k.adjoint() * cplx{eps, 0.0};
  }
  return out;
}

std::vector<Mat> projectors_in_outcome_order(const Observable& a) {
  std::vector<Mat> out;
  if (a.outcomes() == 2) {
    out.push_back(a.spectrum.back().projector);   // largest eigenvalue -> outcome 0
    out.push_back(a.spectrum.front().projector);  // smallest eigenvalue -> outcome 1
  } else {
    for (const auto& ep : a.spectrum) out.push_back(ep.projector);
  }
  return out;
}

DerivedConstants derive_constants(const Observable& a, ConstantsModel model) {
  DerivedConstants out;
  out.model = model;
  if (model == ConstantsModel::single) {
    if (a.dim() != 2) {
      throw Error(ErrorCode::dimension, "derive_constants: single model needs a 2x2 observable");
    }
    if (a.outcomes() != 2) {
      throw Error(ErrorCode::assumption,
                  "derive_constants: observable must have two distinct eigenvalues");
    }
    const std::vector<Mat> projs = projectors_in_outcome_order(a);
    const Mat& p = projs[0];  // outcome 0
    const Mat& q = projs[1];  // outcome 1
    const double p00 = p(0, 0).real();
    if (p00 * (1.0 - p00) < 1e-10) {
      throw Error(ErrorCode::assumption,
                  "derive_constants: observable is diagonal in the environment reference basis "
                  "(p00*(1-p00) vanishes); the normalized increment degenerates");
    }
    out.alpha = std::sqrt(q(0, 0).real() / p00);
    out.gamma = q(0, 1) / out.alpha - cplx{out.alpha, 0.0} * p(0, 1);
    return out;
  }

  if (a.dim() != 4) {
    throw Error(ErrorCode::dimension, "derive_constants: noise model needs a 4x4 observable");
  }
  if (a.outcomes() != 4) {
    throw Error(ErrorCode::assumption,
                "derive_constants: observable must have four distinct eigenvalues");
  }
  const std::vector<Mat> projs = projectors_in_outcome_order(a);
  std::array<double, 4> p00{};
  for (int i = 0; i < 4; ++i) {
    p00[i] = projs[i](0, 0).real();
    if (p00[i] * (1.0 - p00[i]) < 1e-10) {
      throw Error(ErrorCode::assumption,
                  "derive_constants: outcome projector " + std::to_string(i) +
                  " is diagonal in the environment reference basis");
    }
  }
  for (int i = 1; i < 4; ++i) {
    out.beta[i - 1] = std::sqrt(p00[i] * (1.0 - p00[i]));
    for (int va = 1; va < 4; ++va) {
      out.gamma_ai[i - 1][va - 1] =
          projs[i](0, va) / cplx{p00[i], 0.0} - projs[0](0, va) / cplx{p00[0], 0.0};
    }
  }
  Mat b = Mat::identity(3);
  for (int i = 1; i < 4; ++i) {
    for (int j = 1; j < 4; ++j) {
      if (i == j) continue;
      const double bij = std::sqrt(p00[i] * p00[j] / ((1.0 - p00[i]) * (1.0 - p00[j])));
      out.b_ij[i - 1][j - 1] = bij;
      b(i - 1, j - 1) = cplx{-bij, 0.0};
    }
  }
  const EigH beig = eig_hermitian(b);
  if (beig.values.front() < -1e-10) {
    throw Error(ErrorCode::covariance,
                "derive_constants: covariance matrix B has eigenvalue " +
                std::to_string(beig.values.front()) + " < 0");
  }
  out.covariance = b;
  out.covariance_sqrt = psd_sqrt(b);
  return out;
}

}  // namespace belavkin
