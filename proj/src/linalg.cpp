// belavkin-lab: spectral decompositions, matrix functions and density checks.
#include "belavkin/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace belavkin {

namespace {

// Apply the complex Jacobi rotation that annihilates A(p,q) of the Hermitian
// working matrix. The rotation is R = P * O on the (p,q) plane with
// P = diag(1, conj(u)) (u the phase of A(p,q)) and O a real Jacobi rotation.
struct JacobiRotation {
  double c = 1.0;
  double s = 0.0;
  cplx u = 1.0;  // phase of the annihilated entry
  double t = 0.0;
};

// The rotation is R = [[c, -conj(sigma)], [sigma, c]] on the (p,q) plane with
// sigma = s * conj(u); annihilation of A(p,q) requires t = s/c to solve
// t^2 - 2*tau*t - 1 = 0 with tau = (beta - alpha)/(2|a|), and the diagonal
// moves to (alpha + t|a|, beta - t|a|).
JacobiRotation make_rotation(double alpha, double beta, cplx a) {
  JacobiRotation r;
  const double absa = std::abs(a);
  r.u = a / absa;
  const double tau = (beta - alpha) / (2.0 * absa);
  if (tau >= 0.0)
    r.t = -1.0 / (tau + std::sqrt(1.0 + tau * tau));
  else
    r.t = 1.0 / (-tau + std::sqrt(1.0 + tau * tau));
  r.c = 1.0 / std::sqrt(1.0 + r.t * r.t);
  r.s = r.t * r.c;
  return r;
}

double max_offdiag(const Mat& a) {
  double m = 0.0;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = i + 1; j < a.cols(); ++j) m = std::max(m, std::abs(a(i, j)));
  return m;
}

}  // namespace

EigH eig_hermitian(const Mat& m) {
  if (!m.is_square())
    throw Error(ErrorCode::dimension, "eig_hermitian: matrix not square");
  const int d = m.rows();
  Mat a = m.hermitized();
  Mat v = Mat::identity(d);
  const double scale = std::max(a.fnorm(), 1e-300);

  for (int sweep = 0; sweep < 60; ++sweep) {
    if (max_offdiag(a) <= 1e-15 * scale) break;
    for (int p = 0; p < d; ++p) {
      for (int q = p + 1; q < d; ++q) {
        const cplx apq = a(p, q);
        if (std::abs(apq) <= 1e-18 * scale) {
          a(p, q) = 0.0;
          a(q, p) = 0.0;
          continue;
        }
        const double alpha = a(p, p).real();
        const double beta = a(q, q).real();
        const JacobiRotation r = make_rotation(alpha, beta, apq);
        const cplx sigma = r.s * std::conj(r.u);
        const cplx sigma_c = std::conj(sigma);
        // columns: A <- A R with R = [[c, -conj(sigma)], [sigma, c]]
        for (int k = 0; k < d; ++k) {
          const cplx akp = a(k, p), akq = a(k, q);
          a(k, p) = r.c * akp + sigma * akq;
          a(k, q) = -sigma_c * akp + r.c * akq;
        }
        // rows: A <- R^dagger A
        for (int k = 0; k < d; ++k) {
          const cplx apk = a(p, k), aqk = a(q, k);
          a(p, k) = r.c * apk + sigma_c * aqk;
          a(q, k) = -sigma * apk + r.c * aqk;
        }
        // exact annihilation of the target entry and its mirror
        a(p, p) = cplx(alpha + r.t * std::abs(apq), 0.0);
        a(q, q) = cplx(beta - r.t * std::abs(apq), 0.0);
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        // accumulate eigenvectors: V <- V R
        for (int k = 0; k < d; ++k) {
          const cplx vkp = v(k, p), vkq = v(k, q);
          v(k, p) = r.c * vkp + sigma * vkq;
          v(k, q) = -sigma_c * vkp + r.c * vkq;
        }
      }
    }
  }

  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int i, int j) { return a(i, i).real() < a(j, j).real(); });

  EigH out;
  out.values.resize(d);
  out.vectors = Mat(d, d);
  for (int j = 0; j < d; ++j) {
    out.values[j] = a(order[j], order[j]).real();
    for (int k = 0; k < d; ++k) out.vectors(k, j) = v(k, order[j]);
  }
  return out;
}

Observable hermitian_spectral(const Mat& m, double degeneracy_tol) {
  if (!m.is_square())
    throw Error(ErrorCode::dimension, "hermitian_spectral: matrix not square");
  if (m.hermiticity_defect() > 1e-10)
    throw Error(ErrorCode::validation,
                "hermitian_spectral: input is not Hermitian (defect " +
                    std::to_string(m.hermiticity_defect()) + ")");
  const EigH eig = eig_hermitian(m);
  const int d = m.rows();

  Observable obs;
  obs.matrix = m;
  int j = 0;
  while (j < d) {
    int k = j + 1;
    while (k < d && eig.values[k] - eig.values[k - 1] <= degeneracy_tol) ++k;
    EigenProjector ep;
    double mean = 0.0;
    ep.projector = Mat(d, d);
    for (int c = j; c < k; ++c) {
      mean += eig.values[c];
      for (int r1 = 0; r1 < d; ++r1)
        for (int r2 = 0; r2 < d; ++r2)
          ep.projector(r1, r2) +=
              eig.vectors(r1, c) * std::conj(eig.vectors(r2, c));
    }
    ep.eigenvalue = mean / (k - j);
    ep.projector = ep.projector.hermitized();
    obs.spectrum.push_back(std::move(ep));
    j = k;
  }
  return obs;
}

Mat matrix_exp(const Mat& m) {
  if (!m.is_square())
    throw Error(ErrorCode::dimension, "matrix_exp: matrix not square");
  const int d = m.rows();
  const double nrm = m.fnorm();
  int squarings = 0;
  if (nrm > 0.5) {
    squarings = static_cast<int>(std::ceil(std::log2(nrm / 0.5)));
    squarings = std::min(squarings, 60);
  }
  Mat x = m * (1.0 / std::ldexp(1.0, squarings));
  Mat result = Mat::identity(d);
  Mat term = Mat::identity(d);
  for (int k = 1; k <= 80; ++k) {
    term = term * x;
    term *= cplx(1.0 / k, 0.0);
    result += term;
    if (term.fnorm() <= 1e-20 * std::max(result.fnorm(), 1.0)) break;
  }
  for (int s = 0; s < squarings; ++s) result = result * result;
  return result;
}

Mat nearest_unitary(const Mat& m) {
  if (!m.is_square())
    throw Error(ErrorCode::dimension, "nearest_unitary: matrix not square");
  const Mat gram = m.adjoint() * m;
  const EigH eig = eig_hermitian(gram);
  const double top = std::max(eig.values.back(), 0.0);
  if (eig.values.front() <= 1e-24 * std::max(top, 1.0))
    throw Error(ErrorCode::validation,
                "nearest_unitary: input is rank-deficient");
  const int d = m.rows();
  Mat inv_sqrt(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      cplx acc = 0.0;
      for (int k = 0; k < d; ++k)
        acc += eig.vectors(i, k) * std::conj(eig.vectors(j, k)) /
               std::sqrt(eig.values[k]);
      inv_sqrt(i, j) = acc;
    }
  return m * inv_sqrt;
}

Mat psd_sqrt(const Mat& b) {
  if (!b.is_square())
    throw Error(ErrorCode::dimension, "psd_sqrt: matrix not square");
  if (b.hermiticity_defect() > 1e-10)
    throw Error(ErrorCode::validation, "psd_sqrt: input is not Hermitian");
  const EigH eig = eig_hermitian(b);
  if (eig.values.front() < -1e-6)
    throw Error(ErrorCode::validation,
                "psd_sqrt: input is not PSD (min eigenvalue " +
                    std::to_string(eig.values.front()) + ")");
  const int d = b.rows();
  Mat r(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      cplx acc = 0.0;
      for (int k = 0; k < d; ++k)
        acc += eig.vectors(i, k) * std::conj(eig.vectors(j, k)) *
               std::sqrt(std::max(eig.values[k], 0.0));
      r(i, j) = acc;
    }
  return r.hermitized();
}

std::string DensityReport::summary() const {
  std::ostringstream os;
  os << (pass ? "pass" : "fail");
  for (const auto& v : violations) os << "; " << v;
  return os.str();
}

DensityReport validate_density(const Mat& m, double tol) {
  if (!m.is_square())
    throw Error(ErrorCode::dimension, "validate_density: matrix not square");
  DensityReport rep;
  rep.tol = tol;
  rep.psd_tol = 100.0 * tol;
  rep.hermiticity_defect = m.hermiticity_defect();
  rep.trace_defect = std::abs(m.trace() - cplx(1.0, 0.0));
  rep.min_eigenvalue = eig_hermitian(m.hermitized()).values.front();
  rep.hermitian_ok = rep.hermiticity_defect <= tol;
  rep.trace_ok = rep.trace_defect <= tol;
  rep.psd_ok = rep.min_eigenvalue >= -rep.psd_tol;
  rep.pass = rep.hermitian_ok && rep.trace_ok && rep.psd_ok;
  std::ostringstream os;
  if (!rep.hermitian_ok) {
    os.str("");
    os << "not Hermitian: defect " << rep.hermiticity_defect;
    rep.violations.push_back(os.str());
  }
  if (!rep.trace_ok) {
    os.str("");
    os << "trace deviates from 1 by " << rep.trace_defect;
    rep.violations.push_back(os.str());
  }
  if (!rep.psd_ok) {
    os.str("");
    os << "not PSD: min eigenvalue " << rep.min_eigenvalue;
    rep.violations.push_back(os.str());
  }
  return rep;
}

Mat psd_repair(const Mat& m) {
  if (!m.is_square())
    throw Error(ErrorCode::dimension, "psd_repair: matrix not square");
  if (m.hermiticity_defect() > 1e-8)
    throw Error(ErrorCode::validation,
                "psd_repair: input is not Hermitian within 1e-8");
  const Mat h = m.hermitized();
  const EigH eig = eig_hermitian(h);
  const int d = m.rows();
  double tr = 0.0;
  for (double w : eig.values) tr += std::max(w, 0.0);
  if (tr <= 1e-12)
    throw Error(ErrorCode::validation,
                "psd_repair: trace after clipping is not positive");
  Mat r(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      cplx acc = 0.0;
      for (int k = 0; k < d; ++k)
        acc += eig.vectors(i, k) * std::conj(eig.vectors(j, k)) *
               (std::max(eig.values[k], 0.0) / tr);
      r(i, j) = acc;
    }
  return r.hermitized();
}

EigU eig_unitary(const Mat& u) {
  if (!u.is_square())
    throw Error(ErrorCode::dimension, "eig_unitary: matrix not square");
  const int d = u.rows();
  if (max_abs_diff(u.adjoint() * u, Mat::identity(d)) > 1e-8)
    throw Error(ErrorCode::validation, "eig_unitary: input is not unitary");

  // Diagonalise the Hermitian part, then split cos-degenerate clusters with
  // the anti-Hermitian part (both commute with u).
  const Mat h1 = (u + u.adjoint()) * 0.5;
  const Mat h2 = (u - u.adjoint()) * cplx(0.0, -0.5);
  const EigH e1 = eig_hermitian(h1);

  Mat v = e1.vectors;
  int j = 0;
  while (j < d) {
    int k = j + 1;
    while (k < d && e1.values[k] - e1.values[k - 1] <= 1e-8) ++k;
    const int w = k - j;
    if (w > 1) {
      // restriction of h2 to the cluster subspace
      Mat sub(w, w);
      for (int r = 0; r < w; ++r)
        for (int c = 0; c < w; ++c) {
          cplx acc = 0.0;
          for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b)
              acc += std::conj(v(a, j + r)) * h2(a, b) * v(b, j + c);
          sub(r, c) = acc;
        }
      const EigH e2 = eig_hermitian(sub);
      Mat rotated(d, w);
      for (int a = 0; a < d; ++a)
        for (int c = 0; c < w; ++c) {
          cplx acc = 0.0;
          for (int r = 0; r < w; ++r) acc += v(a, j + r) * e2.vectors(r, c);
          rotated(a, c) = acc;
        }
      for (int a = 0; a < d; ++a)
        for (int c = 0; c < w; ++c) v(a, j + c) = rotated(a, c);
    }
    j = k;
  }

  EigU out;
  out.vectors = v;
  out.angles.resize(d);
  for (int c = 0; c < d; ++c) {
    cplx lam = 0.0;
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        lam += std::conj(v(a, c)) * u(a, b) * v(b, c);
    out.angles[c] = std::atan2(lam.imag(), lam.real());
  }
  return out;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw Error(ErrorCode::dimension, "fit_line: need >= 2 matching points");
  const double n = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double denom = n * sxx - sx * sx;
  if (std::abs(denom) < 1e-300)
    throw Error(ErrorCode::validation, "fit_line: degenerate abscissae");
  LineFit f;
  f.slope = (n * sxy - sx * sy) / denom;
  f.intercept = (sy - f.slope * sx) / n;
  double ss = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    ss += r * r;
  }
  f.residual_rms = std::sqrt(ss / n);
  if (x.size() > 2) {
    const double sigma2 = ss / (n - 2.0);
    f.slope_halfwidth = 2.0 * std::sqrt(sigma2 * n / denom);
  }
  return f;
}

}  // namespace belavkin
