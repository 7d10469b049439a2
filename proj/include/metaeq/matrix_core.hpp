#pragma once

// Dense kernel shared by every module: SPD validation, Kronecker products,
// column-stacking vectorisation, conditioned solves and seeded SPD draws.
// Everything is templated on the scalar type; double is the reference.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <type_traits>

#include "metaeq/errors.hpp"

namespace metaeq {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = Mat<double>;
using Vector = Vec<double>;

/// Blocks deduction so Eigen expressions convert at the call site.
template <typename T>
using Arg = std::type_identity_t<T>;

/// Ceiling on the 2-norm condition number accepted by `solve`/`inverse`.
inline constexpr double kConditionCeiling = 1e12;

template <typename Scalar>
struct SpdCertificate {
  Scalar min_eigenvalue;
  Scalar max_eigenvalue;
  /// max_eigenvalue / min_eigenvalue, always >= 1.
  Scalar condition_estimate;
};

template <typename Derived>
typename Derived::Scalar max_abs_entry(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  return m.size() == 0 ? Scalar(0) : m.cwiseAbs().maxCoeff();
}

/// Absolute band used for symmetry and positivity decisions:
/// 1e-10 * (1 + max|entry|).
template <typename Derived>
typename Derived::Scalar spd_tolerance(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  return Scalar(1e-10) * (Scalar(1) + max_abs_entry(m));
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

template <typename Derived>
bool is_symmetric(const Eigen::MatrixBase<Derived>& m) {
  if (m.rows() != m.cols()) return false;
  return max_abs_entry(m - m.transpose()) <= spd_tolerance(m);
}

template <typename Derived>
Mat<typename Derived::Scalar> symmetrize(const Eigen::MatrixBase<Derived>& m) {
  return (m + m.transpose()) / typename Derived::Scalar(2);
}

/// Extreme eigenvalues of a symmetric matrix (lower triangle is read).
template <typename Derived>
std::pair<typename Derived::Scalar, typename Derived::Scalar>
symmetric_eigen_extremes(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(m.eval(),
                                               Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  return {ev.minCoeff(), ev.maxCoeff()};
}

template <typename Derived>
typename Derived::Scalar min_eigenvalue(const Eigen::MatrixBase<Derived>& m) {
  return symmetric_eigen_extremes(m).first;
}

namespace detail {

// Index of the first pivot that fails an unpivoted Cholesky sweep, or the
// last index if every pivot stays positive (rounding edge cases).
template <typename Scalar>
Eigen::Index first_nonpositive_pivot(const Mat<Scalar>& m, Scalar tol) {
  const Eigen::Index n = m.rows();
  Mat<Scalar> l = Mat<Scalar>::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Scalar d = m(j, j) - l.row(j).head(j).squaredNorm();
    if (!(d > tol)) return j;
    l(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      l(i, j) = (m(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
    }
  }
  return n - 1;
}

}  // namespace detail

/// Validates that `m` is square, symmetric within `spd_tolerance(m)`, and
/// positive definite: its smallest eigenvalue must exceed the same band.
/// On failure the error carries the first nonpositive Cholesky pivot.
template <typename Derived>
SpdCertificate<typename Derived::Scalar> cholesky_check(
    const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.rows() != m.cols()) {
    std::ostringstream os;
    os << "matrix is " << m.rows() << "x" << m.cols();
    throw Error(ErrorCode::NotSquare, os.str());
  }
  if (!all_finite(m)) {
    throw Error(ErrorCode::NonFiniteEncountered, "matrix has non-finite entries");
  }
  if (!is_symmetric(m)) {
    std::ostringstream os;
    os << "max asymmetry " << max_abs_entry(m - m.transpose())
       << " exceeds tolerance " << spd_tolerance(m);
    throw Error(ErrorCode::NotSymmetric, os.str());
  }
  const Mat<Scalar> sym = symmetrize(m);
  const Scalar tol = spd_tolerance(m);
  const auto [lo, hi] = symmetric_eigen_extremes(sym);
  if (!(lo > tol)) {
    const Eigen::Index pivot = detail::first_nonpositive_pivot(sym, tol);
    std::ostringstream os;
    os << "min eigenvalue " << lo << " <= " << tol << " (leading minor "
       << pivot + 1 << ")";
    throw NotPositiveDefiniteError(pivot, static_cast<double>(lo), os.str());
  }
  return {lo, hi, hi / lo};
}

/// Kronecker product: block (i, j) of the result is a(i, j) * b.
template <typename DA, typename DB>
Mat<typename DA::Scalar> kron(const Eigen::MatrixBase<DA>& a,
                              const Eigen::MatrixBase<DB>& b) {
  using Scalar = typename DA::Scalar;
  Mat<Scalar> out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

/// Column-stacking vectorisation, independent of storage order.
template <typename Derived>
Vec<typename Derived::Scalar> vec(const Eigen::MatrixBase<Derived>& m) {
  Vec<typename Derived::Scalar> out(m.size());
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) out(k++) = m(i, j);
  }
  return out;
}

/// Inverse of `vec`.
template <typename Derived>
Mat<typename Derived::Scalar> unvec(const Eigen::MatrixBase<Derived>& v,
                                    Eigen::Index rows, Eigen::Index cols) {
  if (v.size() != rows * cols) {
    throw Error(ErrorCode::DimensionMismatch, "unvec: length != rows*cols");
  }
  Mat<typename Derived::Scalar> out(rows, cols);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = v(k++);
  }
  return out;
}

/// 2-norm condition number from the singular values; +inf when singular.
template <typename Derived>
typename Derived::Scalar condition_estimate(
    const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  Eigen::JacobiSVD<Mat<Scalar>> svd(m.eval());
  const auto& s = svd.singularValues();
  if (s.size() == 0) return Scalar(1);
  const Scalar smin = s(s.size() - 1);
  if (!(smin > Scalar(0))) return std::numeric_limits<Scalar>::infinity();
  return s(0) / smin;
}

namespace detail {

template <typename Derived>
void require_well_conditioned(const Eigen::MatrixBase<Derived>& a,
                              const char* what) {
  if (a.rows() != a.cols()) {
    throw Error(ErrorCode::NotSquare, std::string(what) + ": not square");
  }
  const auto cond = condition_estimate(a);
  if (!(cond < typename Derived::Scalar(kConditionCeiling))) {
    std::ostringstream os;
    os << what << ": condition estimate " << cond << " >= "
       << kConditionCeiling;
    throw Error(ErrorCode::IllConditioned, os.str());
  }
}

}  // namespace detail

/// Solves A X = B by pivoted LU after the conditioning gate.
template <typename DA, typename DB>
Mat<typename DA::Scalar> solve(const Eigen::MatrixBase<DA>& a,
                               const Eigen::MatrixBase<DB>& b) {
  if (a.rows() != b.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "solve: row count mismatch");
  }
  detail::require_well_conditioned(a, "solve");
  return a.fullPivLu().solve(b);
}

template <typename Derived>
Mat<typename Derived::Scalar> inverse(const Eigen::MatrixBase<Derived>& a) {
  detail::require_well_conditioned(a, "inverse");
  return a.fullPivLu().inverse();
}

/// Inverse of an SPD matrix via its Cholesky factor.
template <typename Derived>
Mat<typename Derived::Scalar> spd_inverse(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  Eigen::LLT<Mat<Scalar>> llt(a.eval());
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::NotPositiveDefinite, "spd_inverse: LLT failed");
  }
  return llt.solve(Mat<Scalar>::Identity(a.rows(), a.cols()));
}

template <typename Scalar = double, typename Rng>
Mat<Scalar> standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat<Scalar> g(rows, cols);
  // Fill row by row so the draw order matches row-major serialisation.
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) g(i, j) = Scalar(normal(rng));
  }
  return g;
}

/// G * G^T + ridge * I with G a seeded standard normal dim x dim matrix.
template <typename Scalar = double>
Mat<Scalar> random_spd(Eigen::Index dim, std::uint64_t seed, Scalar ridge) {
  if (dim < 1) throw Error(ErrorCode::InvalidArgument, "random_spd: dim < 1");
  if (!(ridge > Scalar(0))) {
    throw Error(ErrorCode::InvalidArgument, "random_spd: ridge must be > 0");
  }
  std::mt19937_64 rng(seed);
  const Mat<Scalar> g = standard_normal<Scalar>(dim, dim, rng);
  Mat<Scalar> out = g * g.transpose();
  out.diagonal().array() += ridge;
  return symmetrize(out);
}

}  // namespace metaeq
