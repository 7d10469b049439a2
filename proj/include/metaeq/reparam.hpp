#pragma once

// Invertible affine maps T(W) = A W B + K on weight space, the risk pulled
// back through them, and the gradient transformation law
//   grad R1(W) = A^T grad R2(T(W)) B^T.

#include <stdexcept>
#include <string>

#include "metaeq/matrix_core.hpp"
#include "metaeq/risk.hpp"

namespace metaeq {

template <typename Scalar = double>
class AffineMap {
 public:
  /// Throws IllConditioned when A or B has condition estimate >= 1e12.
  AffineMap(Mat<Scalar> a, Mat<Scalar> b, Mat<Scalar> offset)
      : a_(std::move(a)), b_(std::move(b)), offset_(std::move(offset)) {
    const Eigen::Index k = a_.rows();
    detail::require_shape(a_, k, k, "A");
    detail::require_shape(b_, k, k, "B");
    detail::require_shape(offset_, k, k, "K");
    detail::require_well_conditioned(a_, "affine map A");
    detail::require_well_conditioned(b_, "affine map B");
  }

  static AffineMap identity(Eigen::Index k) {
    return {Mat<Scalar>::Identity(k, k), Mat<Scalar>::Identity(k, k),
            Mat<Scalar>::Zero(k, k)};
  }

  /// T(W) = I - W, the involution between the two standard charts.
  static AffineMap reflection(Eigen::Index k) {
    return {-Mat<Scalar>::Identity(k, k), Mat<Scalar>::Identity(k, k),
            Mat<Scalar>::Identity(k, k)};
  }

  Eigen::Index dim() const { return a_.rows(); }
  const Mat<Scalar>& a() const { return a_; }
  const Mat<Scalar>& b() const { return b_; }
  const Mat<Scalar>& offset() const { return offset_; }

  bool operator==(const AffineMap& other) const {
    return a_ == other.a_ && b_ == other.b_ && offset_ == other.offset_;
  }

 private:
  Mat<Scalar> a_, b_, offset_;
};

template <typename Scalar>
Mat<Scalar> apply(const AffineMap<Scalar>& t, const Arg<Mat<Scalar>>& w) {
  detail::require_shape(w, t.dim(), t.dim(), "W");
  return t.a() * w * t.b() + t.offset();
}

/// W2 -> A^{-1} (W2 - K) B^{-1}.
template <typename Scalar>
AffineMap<Scalar> invert(const AffineMap<Scalar>& t) {
  const Mat<Scalar> a_inv = inverse(t.a());
  const Mat<Scalar> b_inv = inverse(t.b());
  return {a_inv, b_inv, Mat<Scalar>(-a_inv * t.offset() * b_inv)};
}

/// outer o inner: W -> outer(inner(W)).
template <typename Scalar>
AffineMap<Scalar> compose(const AffineMap<Scalar>& outer,
                          const AffineMap<Scalar>& inner) {
  return {Mat<Scalar>(outer.a() * inner.a()),
          Mat<Scalar>(inner.b() * outer.b()),
          Mat<Scalar>(outer.a() * inner.offset() * outer.b() + outer.offset())};
}

/// A^T g B^T. With g = grad R2(T(W)) this is grad R1(W) for R1 = R2 o T.
template <typename Scalar>
Mat<Scalar> transform_gradient(const AffineMap<Scalar>& t,
                               const Arg<Mat<Scalar>>& grad_at_image) {
  detail::require_shape(grad_at_image, t.dim(), t.dim(), "gradient");
  return t.a().transpose() * grad_at_image * t.b().transpose();
}

/// Matrix L with vec(T(W) - K) = L vec(W), i.e. B^T kron A.
template <typename Scalar>
Mat<Scalar> linear_part(const AffineMap<Scalar>& t) {
  return kron(Mat<Scalar>(t.b().transpose()), t.a());
}

enum class ChartKind { FormA, FormB, General };

inline std::string to_string(ChartKind kind) {
  switch (kind) {
    case ChartKind::FormA: return "A";
    case ChartKind::FormB: return "B";
    case ChartKind::General: return "general";
  }
  return "?";
}

/// A coordinate chart on weight space. `to_chart()` maps Form-A weights to
/// this chart's weights, so the chart's risk is R(to_chart^{-1}(W)).
template <typename Scalar = double>
class Chart {
 public:
  static Chart form_a(Eigen::Index k) {
    return Chart(ChartKind::FormA, AffineMap<Scalar>::identity(k));
  }

  static Chart form_b(Eigen::Index k) {
    Chart chart(ChartKind::FormB, AffineMap<Scalar>::reflection(k));
    const Mat<Scalar> eye = Mat<Scalar>::Identity(k, k);
    if (!(chart.map_ == AffineMap<Scalar>(-eye, eye, eye)) ||
        !(invert(chart.map_) == chart.map_)) {
      throw std::logic_error("Form-B chart must be the involution I - W");
    }
    return chart;
  }

  static Chart general(AffineMap<Scalar> map) {
    return Chart(ChartKind::General, std::move(map));
  }

  ChartKind kind() const { return kind_; }
  Eigen::Index dim() const { return map_.dim(); }
  const AffineMap<Scalar>& to_chart() const { return map_; }
  const AffineMap<Scalar>& from_chart() const { return inverse_; }

 private:
  Chart(ChartKind kind, AffineMap<Scalar> map)
      : kind_(kind), map_(std::move(map)), inverse_(invert(map_)) {}

  ChartKind kind_;
  AffineMap<Scalar> map_;
  AffineMap<Scalar> inverse_;
};

/// The risk seen through an affine chart: R2(W2) = R(T^{-1}(W2)). Built
/// by coordinate substitution, so the landscape is the base one exactly.
template <typename Scalar = double>
class PulledBackRisk {
 public:
  PulledBackRisk(RiskSpec<Scalar> spec, AffineMap<Scalar> t)
      : spec_(std::move(spec)), t_(std::move(t)), t_inv_(invert(t_)) {
    detail::require_shape(t_.a(), spec_.dim(), spec_.dim(), "affine map");
  }

  Eigen::Index dim() const { return spec_.dim(); }
  const RiskSpec<Scalar>& spec() const { return spec_; }
  const AffineMap<Scalar>& map() const { return t_; }

  /// Base-chart weights corresponding to `w`.
  Mat<Scalar> to_base(const Arg<Mat<Scalar>>& w) const { return apply(t_inv_, w); }

  Scalar value(const Arg<Mat<Scalar>>& w) const { return risk(spec_, to_base(w)); }

  Mat<Scalar> gradient(const Arg<Mat<Scalar>>& w) const {
    return transform_gradient(t_inv_, metaeq::gradient(spec_, to_base(w)));
  }

  Mat<Scalar> fd_gradient(const Mat<Scalar>& w, Scalar step = Scalar(0)) const {
    return fd_gradient_of<Scalar>(
        [this](const Mat<Scalar>& x) { return value(x); }, w, step);
  }

  /// L^T H L with L the linear part of T^{-1}.
  Mat<Scalar> hessian() const {
    const Mat<Scalar> l = linear_part(t_inv_);
    return symmetrize(Mat<Scalar>(l.transpose() * metaeq::hessian(spec_).hessian * l));
  }

 private:
  RiskSpec<Scalar> spec_;
  AffineMap<Scalar> t_;
  AffineMap<Scalar> t_inv_;
};

template <typename Scalar>
PulledBackRisk<Scalar> pullback_risk(const RiskSpec<Scalar>& spec,
                                     const AffineMap<Scalar>& t) {
  return PulledBackRisk<Scalar>(spec, t);
}

template <typename Scalar>
PulledBackRisk<Scalar> pullback_risk(const RiskSpec<Scalar>& spec,
                                     const Chart<Scalar>& chart) {
  return PulledBackRisk<Scalar>(spec, chart.to_chart());
}

/// A = I + 0.5 G, redrawn until its condition estimate is below
/// `max_condition`.
template <typename Scalar = double, typename Rng>
Mat<Scalar> random_well_conditioned(Eigen::Index k, Rng& rng,
                                    Scalar max_condition = Scalar(1e3)) {
  for (;;) {
    Mat<Scalar> m = Mat<Scalar>::Identity(k, k) +
                    Scalar(0.5) * standard_normal<Scalar>(k, k, rng);
    if (condition_estimate(m) < max_condition) return m;
  }
}

template <typename Scalar = double, typename Rng>
AffineMap<Scalar> random_affine_map(Eigen::Index k, Rng& rng) {
  Mat<Scalar> a = random_well_conditioned<Scalar>(k, rng);
  Mat<Scalar> b = random_well_conditioned<Scalar>(k, rng);
  Mat<Scalar> offset = standard_normal<Scalar>(k, k, rng);
  return {std::move(a), std::move(b), std::move(offset)};
}

}  // namespace metaeq
