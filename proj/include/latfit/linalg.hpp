#pragma once

// Small fixed-size linear algebra helpers shared by every module. Real
// matrices are Eigen fixed-size types; integer matrices (reparametrisations)
// use int64 entries and exact cofactor arithmetic.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace latfit {

template <int Dim>
using Vec = Eigen::Matrix<double, Dim, 1>;
template <int Dim>
using Mat = Eigen::Matrix<double, Dim, Dim>;
template <int Dim>
using IVec = Eigen::Matrix<std::int64_t, Dim, 1>;
template <int Dim>
using IMat = Eigen::Matrix<std::int64_t, Dim, Dim>;

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kPi = 3.14159265358979323846;

/// Volume of the unit ball in n dimensions (n = 0 gives 1).
inline double unit_ball_volume(int n) {
  return std::pow(kPi, 0.5 * n) / std::tgamma(0.5 * n + 1.0);
}

/// Surface area of the unit sphere S^{n-1} in R^n.
inline double unit_sphere_area(int n) { return n * unit_ball_volume(n); }

/// Operator (spectral) norm |M|.
template <int Dim>
double op_norm(const Mat<Dim>& m) {
  Eigen::JacobiSVD<Mat<Dim>> svd(m);
  return svd.singularValues()(0);
}

/// Frobenius norm ‖M‖.
template <int Dim>
double frob(const Mat<Dim>& m) {
  return m.norm();
}

/// Rotation R ∈ SO_d maximising tr(Rᵀ M) (the orthogonal polar factor with
/// the determinant forced to +1).
template <int Dim>
Mat<Dim> nearest_rotation(const Mat<Dim>& m) {
  Eigen::JacobiSVD<Mat<Dim>> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat<Dim> u = svd.matrixU();
  const Mat<Dim> v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(Dim - 1) *= -1.0;
  return u * v.transpose();
}

/// max over R ∈ SO_d of tr(Rᵀ M): the signed singular value sum.
template <int Dim>
double max_rotation_trace(const Mat<Dim>& m) {
  Eigen::JacobiSVD<Mat<Dim>> svd(m);
  Vec<Dim> s = svd.singularValues();
  double sum = s.sum();
  if (m.determinant() < 0.0) sum -= 2.0 * s(Dim - 1);
  return sum;
}

template <int Dim>
std::int64_t int_det(const IMat<Dim>& b) {
  if constexpr (Dim == 2) {
    return b(0, 0) * b(1, 1) - b(0, 1) * b(1, 0);
  } else {
    static_assert(Dim == 3, "only d = 2, 3 are supported");
    return b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1)) -
           b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0)) +
           b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
  }
}

/// Inverse of an integer matrix with det = ±1 (adjugate divided by det).
template <int Dim>
IMat<Dim> int_inverse(const IMat<Dim>& b) {
  const std::int64_t det = int_det<Dim>(b);
  if (det != 1 && det != -1) throw Error("int_inverse: matrix is not unimodular");
  IMat<Dim> adj;
  if constexpr (Dim == 2) {
    adj << b(1, 1), -b(0, 1), -b(1, 0), b(0, 0);
  } else {
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const int r0 = (j + 1) % 3, r1 = (j + 2) % 3;
        const int c0 = (i + 1) % 3, c1 = (i + 2) % 3;
        adj(i, j) = b(r0, c0) * b(r1, c1) - b(r0, c1) * b(r1, c0);
      }
    }
  }
  return adj * det;
}

template <int Dim>
IMat<Dim> round_to_int(const Mat<Dim>& m) {
  IMat<Dim> r;
  for (int i = 0; i < Dim; ++i)
    for (int j = 0; j < Dim; ++j) r(i, j) = static_cast<std::int64_t>(std::llround(m(i, j)));
  return r;
}

template <int Dim>
IVec<Dim> round_to_int(const Vec<Dim>& v) {
  IVec<Dim> r;
  for (int i = 0; i < Dim; ++i) r(i) = static_cast<std::int64_t>(std::llround(v(i)));
  return r;
}

/// Largest distance of an entry to its nearest integer.
template <typename Derived>
double rounding_gap(const Eigen::MatrixBase<Derived>& m) {
  double gap = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      gap = std::max(gap, std::abs(m(i, j) - std::round(m(i, j))));
  return gap;
}

/// All B with entries in [-range, range] and det B = 1, in lexicographic
/// (row-major) order.
template <int Dim>
std::vector<IMat<Dim>> enumerate_unimodular(int range) {
  std::vector<IMat<Dim>> out;
  constexpr int n = Dim * Dim;
  const int base = 2 * range + 1;
  std::int64_t total = 1;
  for (int k = 0; k < n; ++k) total *= base;
  for (std::int64_t code = 0; code < total; ++code) {
    IMat<Dim> b;
    std::int64_t c = code;
    for (int k = n - 1; k >= 0; --k) {
      b(k / Dim, k % Dim) = c % base - range;
      c /= base;
    }
    if (int_det<Dim>(b) == 1) out.push_back(b);
  }
  return out;
}

/// Lower-triangular Hermite normal form under column operations: returns H
/// with H = N U for some unimodular U, positive diagonal, and entries left
/// of each pivot reduced to [0, pivot). Two full-rank integer matrices span
/// the same column lattice iff their forms coincide.
template <int Dim>
IMat<Dim> hermite_normal_form(IMat<Dim> h) {
  for (int row = 0; row < Dim; ++row) {
    // Euclid on the entries of this row in columns row..Dim-1.
    for (;;) {
      int pivot = -1;
      for (int c = row; c < Dim; ++c) {
        if (h(row, c) != 0 && (pivot < 0 || std::llabs(h(row, c)) < std::llabs(h(row, pivot))))
          pivot = c;
      }
      if (pivot < 0) break;
      if (pivot != row) h.col(pivot).swap(h.col(row));
      bool done = true;
      for (int c = row + 1; c < Dim; ++c) {
        if (h(row, c) == 0) continue;
        const std::int64_t q = h(row, c) / h(row, row);
        h.col(c) -= q * h.col(row);
        if (h(row, c) != 0) done = false;
      }
      if (done) break;
    }
    if (h(row, row) < 0) h.col(row) *= -1;
    if (h(row, row) == 0) continue;
    for (int c = 0; c < row; ++c) {
      std::int64_t q = h(row, c) / h(row, row);
      if (h(row, c) - q * h(row, row) < 0) --q;
      h.col(c) -= q * h.col(row);
    }
  }
  return h;
}

/// Strict lexicographic order on the row-major entries of two matrices.
template <typename Derived>
bool lex_less(const Eigen::MatrixBase<Derived>& a, const Eigen::MatrixBase<Derived>& b) {
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      if (a(i, j) < b(i, j)) return true;
      if (a(i, j) > b(i, j)) return false;
    }
  return false;
}

/// Maps every coordinate into [0, 1).
template <int Dim>
Vec<Dim> wrap_unit(const Vec<Dim>& v) {
  Vec<Dim> w;
  for (int k = 0; k < Dim; ++k) {
    w(k) = v(k) - std::floor(v(k));
    if (w(k) >= 1.0) w(k) = 0.0;
  }
  return w;
}

}  // namespace latfit
