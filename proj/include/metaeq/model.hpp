#pragma once

// The two-estimator problem: joint asymptotic covariance, scaled biases,
// the risk weighting, and the quadratic coefficient matrix M.

#include <string>

#include "metaeq/matrix_core.hpp"

namespace metaeq {

/// Joint asymptotic behaviour of two sqrt(N)-scaled estimators of a
/// K-vector. Biases are stored already scaled. Immutable once built.
template <typename Scalar = double>
class JointModel {
 public:
  Eigen::Index dim() const { return v1_.rows(); }
  const Mat<Scalar>& v1() const { return v1_; }
  const Mat<Scalar>& v2() const { return v2_; }
  const Mat<Scalar>& c() const { return c_; }
  const Vec<Scalar>& b1() const { return b1_; }
  const Vec<Scalar>& b2() const { return b2_; }
  /// [[V1, C], [C^T, V2]].
  const Mat<Scalar>& sigma() const { return sigma_; }

 private:
  template <typename S>
  friend JointModel<S> build_model(const Mat<S>&, const Mat<S>&, const Mat<S>&,
                                   const Vec<S>&, const Vec<S>&);

  Mat<Scalar> v1_, v2_, c_;
  Vec<Scalar> b1_, b2_;
  Mat<Scalar> sigma_;
};

namespace detail {

template <typename Derived>
void require_shape(const Eigen::MatrixBase<Derived>& m, Eigen::Index rows,
                   Eigen::Index cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << name << " is " << m.rows() << "x" << m.cols() << ", expected "
       << rows << "x" << cols;
    throw Error(ErrorCode::DimensionMismatch, os.str());
  }
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* name) {
  if (!all_finite(m)) {
    throw Error(ErrorCode::NonFiniteEncountered,
                std::string(name) + " has non-finite entries");
  }
}

}  // namespace detail

template <typename Scalar>
Mat<Scalar> assemble_sigma(const Mat<Scalar>& v1, const Mat<Scalar>& v2,
                           const Mat<Scalar>& c) {
  const Eigen::Index k = v1.rows();
  Mat<Scalar> sigma(2 * k, 2 * k);
  sigma << v1, c, c.transpose(), v2;
  return sigma;
}

/// Certificate for Sigma; raises AssumptionA2Violated when Sigma is not
/// SPD within tolerance.
template <typename Scalar>
SpdCertificate<Scalar> validate_assumptions(const JointModel<Scalar>& model) {
  try {
    return cholesky_check(model.sigma());
  } catch (const Error& e) {
    throw AssumptionError(ErrorCode::AssumptionA2Violated, "sigma",
                          std::string("A2: joint covariance Sigma is not "
                                      "symmetric positive definite (") +
                              e.detail() + ")");
  }
}

template <typename Scalar>
JointModel<Scalar> build_model(const Mat<Scalar>& v1, const Mat<Scalar>& v2,
                               const Mat<Scalar>& c, const Vec<Scalar>& b1,
                               const Vec<Scalar>& b2) {
  const Eigen::Index k = v1.rows();
  if (k < 1) throw Error(ErrorCode::DimensionMismatch, "v1 is empty");
  detail::require_shape(v1, k, k, "v1");
  detail::require_shape(v2, k, k, "v2");
  detail::require_shape(c, k, k, "c");
  detail::require_shape(b1, k, 1, "b1");
  detail::require_shape(b2, k, 1, "b2");
  detail::require_finite(v1, "v1");
  detail::require_finite(v2, "v2");
  detail::require_finite(c, "c");
  detail::require_finite(b1, "b1");
  detail::require_finite(b2, "b2");

  auto check_block = [](const Mat<Scalar>& m, const char* name) {
    try {
      cholesky_check(m);
    } catch (const Error& e) {
      throw AssumptionError(ErrorCode::AssumptionA1Violated, name,
                            std::string("A1: ") + name +
                                " is not symmetric positive definite (" +
                                e.detail() + ")");
    }
  };
  check_block(v1, "v1");
  check_block(v2, "v2");

  JointModel<Scalar> model;
  model.v1_ = symmetrize(v1);
  model.v2_ = symmetrize(v2);
  model.c_ = c;
  model.b1_ = b1;
  model.b2_ = b2;
  model.sigma_ = assemble_sigma(model.v1_, model.v2_, model.c_);
  validate_assumptions(model);
  return model;
}

/// Zero-bias convenience overload.
template <typename Scalar>
JointModel<Scalar> build_model(const Mat<Scalar>& v1, const Mat<Scalar>& v2,
                               const Mat<Scalar>& c) {
  const Vec<Scalar> zero = Vec<Scalar>::Zero(v1.rows());
  return build_model<Scalar>(v1, v2, c, zero, zero);
}

/// A validated model plus the risk weighting Omega. Lambda, M and
/// Omega^{-1} are computed once here; the risk is quadratic in W so these
/// are the only problem-dependent coefficients.
template <typename Scalar = double>
class RiskSpec {
 public:
  const JointModel<Scalar>& model() const { return model_; }
  Eigen::Index dim() const { return model_.dim(); }
  const Mat<Scalar>& omega() const { return omega_; }
  const Mat<Scalar>& omega_inv() const { return omega_inv_; }
  /// b2 - b1.
  const Vec<Scalar>& delta_b() const { return delta_b_; }
  /// delta_b * delta_b^T.
  const Mat<Scalar>& lambda() const { return lambda_; }
  /// V1 + V2 - C - C^T + Lambda.
  const Mat<Scalar>& m_matrix() const { return m_; }
  const SpdCertificate<Scalar>& m_certificate() const { return m_cert_; }

 private:
  template <typename S>
  friend RiskSpec<S> build_risk_spec(const JointModel<S>&, const Mat<S>&);

  JointModel<Scalar> model_;
  Mat<Scalar> omega_, omega_inv_;
  Vec<Scalar> delta_b_;
  Mat<Scalar> lambda_, m_;
  SpdCertificate<Scalar> m_cert_{};
};

template <typename Scalar>
RiskSpec<Scalar> build_risk_spec(const JointModel<Scalar>& model,
                                 const Mat<Scalar>& omega) {
  const Eigen::Index k = model.dim();
  detail::require_shape(omega, k, k, "omega");
  detail::require_finite(omega, "omega");
  try {
    cholesky_check(omega);
  } catch (const Error& e) {
    throw Error(ErrorCode::OmegaNotSpd,
                std::string("omega is not symmetric positive definite (") +
                    e.detail() + ")");
  }

  RiskSpec<Scalar> spec;
  spec.model_ = model;
  spec.omega_ = symmetrize(omega);
  spec.omega_inv_ = symmetrize(spd_inverse(spec.omega_));
  spec.delta_b_ = model.b2() - model.b1();
  spec.lambda_ = spec.delta_b_ * spec.delta_b_.transpose();
  spec.m_ = symmetrize(Mat<Scalar>(model.v1() + model.v2() - model.c() -
                                   model.c().transpose() + spec.lambda_));
  // Positive definiteness of M follows from A2; floating-point degeneracy
  // can still break it, and a flat direction must never yield an "optimum".
  try {
    spec.m_cert_ = cholesky_check(spec.m_);
  } catch (const Error& e) {
    throw Error(ErrorCode::MNotSpd,
                std::string("M = V1 + V2 - C - C^T + Lambda is not SPD (") +
                    e.detail() + ")");
  }
  return spec;
}

/// Omega = I.
template <typename Scalar>
RiskSpec<Scalar> build_risk_spec(const JointModel<Scalar>& model) {
  return build_risk_spec<Scalar>(
      model, Mat<Scalar>::Identity(model.dim(), model.dim()));
}

}  // namespace metaeq
