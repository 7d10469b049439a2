#pragma once

// Trace-AMSE risk R(W) = tr(Omega^{-1} AMSE(W)) for the combination
// (I - W) theta1 + W theta2, with its gradient, Hessian and a
// central-difference oracle.

#include <cmath>
#include <limits>

#include "metaeq/matrix_core.hpp"
#include "metaeq/model.hpp"

namespace metaeq {

template <typename Scalar>
struct ConvexityCertificate {
  Scalar hessian_min_eigenvalue;
  Scalar m_min_eigenvalue;
  Scalar omega_inv_min_eigenvalue;
};

template <typename Scalar>
struct HessianResult {
  /// 2 (M kron Omega^{-1}), acting on vec(W).
  Mat<Scalar> hessian;
  ConvexityCertificate<Scalar> certificate;
};

namespace detail {

template <typename Scalar>
void require_weight_shape(const RiskSpec<Scalar>& spec, const Arg<Mat<Scalar>>& w) {
  require_shape(w, spec.dim(), spec.dim(), "W");
}

}  // namespace detail

/// Asymptotic bias of the combination: (I - W) b1 + W b2.
template <typename Scalar>
Vec<Scalar> combined_bias(const RiskSpec<Scalar>& spec, const Arg<Mat<Scalar>>& w) {
  detail::require_weight_shape(spec, w);
  const auto& m = spec.model();
  return m.b1() + w * (m.b2() - m.b1());
}

/// General-bias AMSE matrix, symmetrised.
template <typename Scalar>
Mat<Scalar> amse(const RiskSpec<Scalar>& spec, const Arg<Mat<Scalar>>& w) {
  detail::require_weight_shape(spec, w);
  const auto& m = spec.model();
  const Mat<Scalar> iw = Mat<Scalar>::Identity(w.rows(), w.cols()) - w;
  const Vec<Scalar> bias = combined_bias(spec, w);
  Mat<Scalar> out = iw * m.v1() * iw.transpose() + w * m.v2() * w.transpose() +
                    iw * m.c() * w.transpose() +
                    w * m.c().transpose() * iw.transpose() +
                    bias * bias.transpose();
  return symmetrize(out);
}

template <typename Scalar>
Scalar risk(const RiskSpec<Scalar>& spec, const Arg<Mat<Scalar>>& w) {
  return (spec.omega_inv() * amse(spec, w)).trace();
}

/// Analytic gradient 2 Omega^{-1} (C - V1 + W M + b1 delta_b^T).
template <typename Scalar>
Mat<Scalar> gradient(const RiskSpec<Scalar>& spec, const Arg<Mat<Scalar>>& w) {
  detail::require_weight_shape(spec, w);
  const auto& m = spec.model();
  return Scalar(2) * spec.omega_inv() *
         (m.c() - m.v1() + w * spec.m_matrix() +
          m.b1() * spec.delta_b().transpose());
}

/// Default central-difference step for entry x: cbrt(eps) * (1 + |x|).
template <typename Scalar>
Scalar default_fd_step(Scalar x) {
  return std::cbrt(std::numeric_limits<Scalar>::epsilon()) *
         (Scalar(1) + std::abs(x));
}

/// Entrywise central differences of any scalar function of a matrix. A
/// nonpositive `step` selects `default_fd_step` per entry.
template <typename Scalar, typename F>
Mat<Scalar> fd_gradient_of(F&& f, const Mat<Scalar>& w, Scalar step) {
  Mat<Scalar> g(w.rows(), w.cols());
  Mat<Scalar> probe = w;
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      const Scalar h = step > Scalar(0) ? step : default_fd_step(w(i, j));
      probe(i, j) = w(i, j) + h;
      const Scalar up = f(probe);
      probe(i, j) = w(i, j) - h;
      const Scalar down = f(probe);
      probe(i, j) = w(i, j);
      g(i, j) = (up - down) / (Scalar(2) * h);
    }
  }
  return g;
}

template <typename Scalar>
Mat<Scalar> fd_gradient(const RiskSpec<Scalar>& spec, const Arg<Mat<Scalar>>& w,
                        Scalar step = Scalar(0)) {
  detail::require_weight_shape(spec, w);
  return fd_gradient_of<Scalar>(
      [&](const Mat<Scalar>& x) { return risk(spec, x); }, w, step);
}

/// ||a - b||_F / (1 + ||a||_F).
template <typename Scalar>
Scalar relative_frobenius_error(const Mat<Scalar>& a, const Mat<Scalar>& b) {
  return (a - b).norm() / (Scalar(1) + a.norm());
}

/// The risk is quadratic, so its Hessian in vec(W) coordinates is
/// W-independent. Its spectrum is the pairwise products of the spectra of
/// 2M and Omega^{-1}.
template <typename Scalar>
HessianResult<Scalar> hessian(const RiskSpec<Scalar>& spec) {
  HessianResult<Scalar> out;
  out.hessian = Scalar(2) * kron(spec.m_matrix(), spec.omega_inv());
  out.certificate.hessian_min_eigenvalue = min_eigenvalue(out.hessian);
  out.certificate.m_min_eigenvalue = min_eigenvalue(spec.m_matrix());
  out.certificate.omega_inv_min_eigenvalue = min_eigenvalue(spec.omega_inv());
  if (!(out.certificate.hessian_min_eigenvalue > Scalar(0))) {
    throw Error(ErrorCode::MNotSpd,
                "Hessian 2(M kron Omega^-1) is not positive definite");
  }
  return out;
}

}  // namespace metaeq
