// belavkin-lab: dense complex matrices for dimensions <= 8, value semantics.
//
// Every state, unitary and superoperator in this project is tiny (system
// dimension 2, environment dimension 2 or 4, superoperators on 2x2 states are
// 4x4), so matrices live in a fixed-capacity stack buffer: no allocation in
// the Monte Carlo hot loops and cheap value copies everywhere.
#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <initializer_list>
#include <string>

#include "belavkin/errors.hpp"

namespace belavkin {

using cplx = std::complex<double>;

inline constexpr int kMaxDim = 8;

class Mat {
 public:
  Mat() = default;
  Mat(int rows, int cols) : rows_(rows), cols_(cols) {
    check_shape(rows, cols);
  }

  static Mat zero(int rows, int cols) { return Mat(rows, cols); }

  static Mat identity(int d) {
    Mat m(d, d);
    for (int i = 0; i < d; ++i) m(i, i) = 1.0;
    return m;
  }

  static Mat from_rows(std::initializer_list<std::initializer_list<cplx>> rows) {
    const int r = static_cast<int>(rows.size());
    const int c = r > 0 ? static_cast<int>(rows.begin()->size()) : 0;
    Mat m(r, c);
    int i = 0;
    for (const auto& row : rows) {
      if (static_cast<int>(row.size()) != c)
        throw Error(ErrorCode::dimension, "from_rows: ragged rows");
      int j = 0;
      for (const cplx& v : row) m(i, j++) = v;
      ++i;
    }
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool is_square() const { return rows_ == cols_; }

  cplx& operator()(int i, int j) { return a_[i * cols_ + j]; }
  const cplx& operator()(int i, int j) const { return a_[i * cols_ + j]; }

  Mat& operator+=(const Mat& o) {
    require_same_shape(o, "+=");
    const int n = rows_ * cols_;
    for (int k = 0; k < n; ++k) a_[k] += o.a_[k];
    return *this;
  }
  Mat& operator-=(const Mat& o) {
    require_same_shape(o, "-=");
    const int n = rows_ * cols_;
    for (int k = 0; k < n; ++k) a_[k] -= o.a_[k];
    return *this;
  }
  Mat& operator*=(const cplx& s) {
    const int n = rows_ * cols_;
    for (int k = 0; k < n; ++k) a_[k] *= s;
    return *this;
  }

  friend Mat operator+(Mat a, const Mat& b) { return a += b; }
  friend Mat operator-(Mat a, const Mat& b) { return a -= b; }
  friend Mat operator*(Mat a, const cplx& s) { return a *= s; }
  friend Mat operator*(const cplx& s, Mat a) { return a *= s; }
  friend Mat operator*(Mat a, double s) { return a *= cplx(s, 0.0); }
  friend Mat operator*(double s, Mat a) { return a *= cplx(s, 0.0); }
  Mat operator-() const { return *this * cplx(-1.0, 0.0); }

  friend Mat operator*(const Mat& a, const Mat& b) {
    if (a.cols_ != b.rows_)
      throw Error(ErrorCode::dimension, "matmul: inner dimensions differ");
    Mat r(a.rows_, b.cols_);
    for (int i = 0; i < a.rows_; ++i)
      for (int k = 0; k < a.cols_; ++k) {
        const cplx aik = a(i, k);
        if (aik == cplx{}) continue;
        for (int j = 0; j < b.cols_; ++j) r(i, j) += aik * b(k, j);
      }
    return r;
  }

  Mat adjoint() const {
    Mat r(cols_, rows_);
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j) r(j, i) = std::conj((*this)(i, j));
    return r;
  }
  Mat transpose() const {
    Mat r(cols_, rows_);
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j) r(j, i) = (*this)(i, j);
    return r;
  }
  Mat conjugate() const {
    Mat r(rows_, cols_);
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j) r(i, j) = std::conj((*this)(i, j));
    return r;
  }

  cplx trace() const {
    require_square("trace");
    cplx t = 0.0;
    for (int i = 0; i < rows_; ++i) t += (*this)(i, i);
    return t;
  }

  double fnorm() const {
    double s = 0.0;
    const int n = rows_ * cols_;
    for (int k = 0; k < n; ++k) s += std::norm(a_[k]);
    return std::sqrt(s);
  }

  double max_abs() const {
    double m = 0.0;
    const int n = rows_ * cols_;
    for (int k = 0; k < n; ++k) m = std::max(m, std::abs(a_[k]));
    return m;
  }

  // (M + M^dagger)/2; the Hermitian part used to tame Euler rounding drift.
  Mat hermitized() const {
    require_square("hermitized");
    Mat r(rows_, cols_);
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j)
        r(i, j) = 0.5 * ((*this)(i, j) + std::conj((*this)(j, i)));
    return r;
  }

  double hermiticity_defect() const {
    require_square("hermiticity_defect");
    double m = 0.0;
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j)
        m = std::max(m, std::abs((*this)(i, j) - std::conj((*this)(j, i))));
    return m;
  }

 private:
  static void check_shape(int rows, int cols) {
    if (rows < 0 || cols < 0 || rows > kMaxDim || cols > kMaxDim)
      throw Error(ErrorCode::dimension,
                  "matrix shape " + std::to_string(rows) + "x" +
                      std::to_string(cols) + " outside supported range (<= " +
                      std::to_string(kMaxDim) + ")");
  }
  void require_same_shape(const Mat& o, const char* op) const {
    if (rows_ != o.rows_ || cols_ != o.cols_)
      throw Error(ErrorCode::dimension, std::string(op) + ": shape mismatch");
  }
  void require_square(const char* op) const {
    if (!is_square())
      throw Error(ErrorCode::dimension, std::string(op) + ": matrix not square");
  }

  int rows_ = 0;
  int cols_ = 0;
  std::array<cplx, kMaxDim * kMaxDim> a_{};
};

// Absolute-tolerance comparison; the project never compares matrices exactly.
inline double max_abs_diff(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorCode::dimension, "max_abs_diff: shape mismatch");
  double m = 0.0;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      m = std::max(m, std::abs(a(i, j) - b(i, j)));
  return m;
}

inline bool approx_equal(const Mat& a, const Mat& b, double tol) {
  return max_abs_diff(a, b) <= tol;
}

// Kronecker product; (a otimes b)[i*rb + k, j*cb + l] = a(i,j) b(k,l).
inline Mat tensor_product(const Mat& a, const Mat& b) {
  Mat r(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) {
      const cplx aij = a(i, j);
      if (aij == cplx{}) continue;
      for (int k = 0; k < b.rows(); ++k)
        for (int l = 0; l < b.cols(); ++l)
          r(i * b.rows() + k, j * b.cols() + l) = aij * b(k, l);
    }
  return r;
}

// Trace out the environment factor of C^{d_s} otimes C^{d_e}:
// result(a,b) = sum_e rho(a*d_e + e, b*d_e + e); satisfies
// Tr[D * result] = Tr[(D otimes I) * rho] for every d_s x d_s matrix D.
inline Mat partial_trace_env(const Mat& rho, int d_s, int d_e) {
  if (!rho.is_square() || rho.rows() != d_s * d_e)
    throw Error(ErrorCode::dimension, "partial_trace_env: dimension mismatch");
  Mat r(d_s, d_s);
  for (int a = 0; a < d_s; ++a)
    for (int b = 0; b < d_s; ++b) {
      cplx s = 0.0;
      for (int e = 0; e < d_e; ++e) s += rho(a * d_e + e, b * d_e + e);
      r(a, b) = s;
    }
  return r;
}

// Matrix unit E_{ij} of the given dimension.
inline Mat matrix_unit(int d, int i, int j) {
  Mat m(d, d);
  m(i, j) = 1.0;
  return m;
}

// --- superoperator helpers (row-major vec convention) -----------------------
// vec stacks rows: vec(X)[i*d + j] = X(i,j), so vec(A X B) = (A otimes B^T) vec(X)
// and the sandwich X -> A X B^dagger has matrix A otimes conj(B).

inline Mat sandwich_superop(const Mat& a, const Mat& b) {
  return tensor_product(a, b.conjugate());
}

// Apply a (d^2 x d^2) superoperator to a d x d matrix without materialising vec.
inline Mat apply_superop(const Mat& s, const Mat& x) {
  const int d = x.rows();
  if (!x.is_square() || s.rows() != d * d || s.cols() != d * d)
    throw Error(ErrorCode::dimension, "apply_superop: dimension mismatch");
  Mat r(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      cplx acc = 0.0;
      const int row = i * d + j;
      for (int k = 0; k < d; ++k)
        for (int l = 0; l < d; ++l) acc += s(row, k * d + l) * x(k, l);
      r(i, j) = acc;
    }
  return r;
}

// Common 2x2 constants.
inline const Mat& pauli_x() {
  static const Mat m = Mat::from_rows({{0.0, 1.0}, {1.0, 0.0}});
  return m;
}
inline const Mat& pauli_y() {
  static const Mat m = Mat::from_rows({{0.0, cplx(0.0, -1.0)}, {cplx(0.0, 1.0), 0.0}});
  return m;
}
inline const Mat& pauli_z() {
  static const Mat m = Mat::from_rows({{1.0, 0.0}, {0.0, -1.0}});
  return m;
}

}  // namespace belavkin
