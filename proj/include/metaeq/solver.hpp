#pragma once

// Minimisers of the (possibly pulled-back) trace-AMSE risk and the map
// from optimal weights to the combined estimator.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <deque>
#include <limits>
#include <sstream>
#include <vector>

#include "metaeq/matrix_core.hpp"
#include "metaeq/model.hpp"
#include "metaeq/reparam.hpp"
#include "metaeq/risk.hpp"

namespace metaeq {

enum class SolveMethod { ClosedForm, Iterative };

inline std::string to_string(SolveMethod method) {
  return method == SolveMethod::ClosedForm ? "closed" : "iterative";
}

template <typename Scalar = double>
struct SolveResult {
  Mat<Scalar> w_opt;
  Scalar risk_at_opt{};
  /// Frobenius norm of the chart gradient at w_opt.
  Scalar grad_norm_at_opt{};
  /// The bound grad_norm_at_opt was certified against.
  Scalar tolerance{};
  int iterations = 0;
  SolveMethod method = SolveMethod::ClosedForm;
  /// Objective after every accepted step, starting with the initial point.
  std::vector<Scalar> risk_trace;
};

template <typename Scalar>
class IterationLimitError : public Error {
 public:
  IterationLimitError(Mat<Scalar> last_iterate, Scalar grad_norm,
                      const std::string& detail)
      : Error(ErrorCode::MaxIterationsExceeded, detail),
        last_iterate_(std::move(last_iterate)),
        grad_norm_(grad_norm) {}

  const Mat<Scalar>& last_iterate() const { return last_iterate_; }
  Scalar grad_norm() const { return grad_norm_; }

 private:
  Mat<Scalar> last_iterate_;
  Scalar grad_norm_;
};

template <typename F, typename Scalar>
concept DifferentiableObjective =
    requires(const F& f, const Arg<Mat<Scalar>>& w) {
      { f.value(w) } -> std::convertible_to<Scalar>;
      { f.gradient(w) } -> std::convertible_to<Mat<Scalar>>;
    };

struct IterativeOptions {
  double tol = 1e-10;
  int max_iter = 10000;
  /// Number of curvature pairs kept by the quasi-Newton update.
  int memory = 20;
};

/// Base-chart minimiser (V1 - C - b1 delta_b^T) M^{-1}, the zero of the
/// analytic gradient.
template <typename Scalar>
Mat<Scalar> base_optimal_weights(const RiskSpec<Scalar>& spec) {
  const auto& m = spec.model();
  const Mat<Scalar> rhs =
      m.v1() - m.c() - m.b1() * spec.delta_b().transpose();
  Eigen::LLT<Mat<Scalar>> llt(spec.m_matrix());
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::MNotSpd, "Cholesky of M failed");
  }
  // W M = rhs  <=>  M W^T = rhs^T, M symmetric.
  return llt.solve(rhs.transpose()).transpose();
}

/// Solves in the base chart and transports the minimiser with the chart
/// map, W_chart = T(W_base). The result is certified against the chart's
/// own gradient.
template <typename Scalar>
SolveResult<Scalar> solve_closed_form(const RiskSpec<Scalar>& spec,
                                      const Chart<Scalar>& chart) {
  detail::require_shape(chart.to_chart().a(), spec.dim(), spec.dim(), "chart");
  const Mat<Scalar> w_base = base_optimal_weights(spec);
  const auto objective = pullback_risk(spec, chart);

  SolveResult<Scalar> out;
  out.method = SolveMethod::ClosedForm;
  out.w_opt = apply(chart.to_chart(), w_base);
  out.risk_at_opt = objective.value(out.w_opt);
  out.grad_norm_at_opt = objective.gradient(out.w_opt).norm();
  out.tolerance = Scalar(1e-9) * (Scalar(1) + std::abs(out.risk_at_opt));
  out.risk_trace = {out.risk_at_opt};
  if (!(out.grad_norm_at_opt <= out.tolerance)) {
    std::ostringstream os;
    os << "gradient norm " << out.grad_norm_at_opt << " at closed-form "
       << "minimiser exceeds " << out.tolerance;
    throw Error(ErrorCode::ClosedFormResidual, os.str());
  }
  return out;
}

namespace detail {

template <typename Scalar>
struct LineSearchPoint {
  Scalar alpha;
  Scalar value;
  Scalar slope;  // directional derivative
  Vec<Scalar> x;
  Vec<Scalar> grad;
};

// Strong-Wolfe search driven by directional derivatives. Sufficient
// decrease may be replaced by the approximate-Wolfe test
// (2 c1 - 1) phi'(0) >= phi'(a) with phi(a) <= phi(0) + eps_f |phi(0)|,
// which stays decidable once value differences fall below rounding.
template <typename Scalar, typename Eval>
bool wolfe_line_search(Eval&& eval, const Vec<Scalar>& x0, Scalar f0,
                       const Vec<Scalar>& g0, const Vec<Scalar>& dir,
                       Scalar alpha0, LineSearchPoint<Scalar>& out) {
  constexpr Scalar c1 = Scalar(1e-4);
  constexpr Scalar c2 = Scalar(0.9);
  constexpr Scalar eps_f = Scalar(1e-12);
  constexpr int kMaxTrials = 60;

  const Scalar slope0 = g0.dot(dir);
  const Scalar f_slack = eps_f * std::abs(f0);

  auto probe = [&](Scalar alpha) {
    LineSearchPoint<Scalar> p;
    p.alpha = alpha;
    p.x = x0 + alpha * dir;
    eval(p.x, p.value, p.grad);
    p.slope = p.grad.dot(dir);
    return p;
  };
  auto curvature_ok = [&](const LineSearchPoint<Scalar>& p) {
    return std::abs(p.slope) <= -c2 * slope0;
  };
  auto decrease_ok = [&](const LineSearchPoint<Scalar>& p) {
    if (p.value <= f0 + c1 * p.alpha * slope0) return true;
    return p.value <= f0 + f_slack &&
           (Scalar(2) * c1 - Scalar(1)) * slope0 >= p.slope;
  };
  auto finite = [](const LineSearchPoint<Scalar>& p) {
    return std::isfinite(p.value) && p.grad.allFinite();
  };

  LineSearchPoint<Scalar> lo{Scalar(0), f0, slope0, x0, g0};
  LineSearchPoint<Scalar> hi;
  bool bracketed = false;
  Scalar alpha = alpha0;
  int trials = 0;

  while (!bracketed) {
    if (++trials > kMaxTrials) return false;
    LineSearchPoint<Scalar> p = probe(alpha);
    if (!finite(p)) {
      alpha = Scalar(0.5) * (lo.alpha + alpha);
      continue;
    }
    if (!decrease_ok(p) || (lo.alpha > Scalar(0) && p.value > lo.value + f_slack)) {
      hi = std::move(p);
      bracketed = true;
      break;
    }
    if (curvature_ok(p)) {
      out = std::move(p);
      return true;
    }
    if (p.slope >= Scalar(0)) {
      hi = std::move(lo);
      lo = std::move(p);
      bracketed = true;
      break;
    }
    lo = std::move(p);
    alpha *= Scalar(2);
  }

  // Zoom: secant step on the derivative, safeguarded to the interior.
  while (++trials <= kMaxTrials) {
    const Scalar a = lo.alpha, b = hi.alpha;
    const Scalar width = b - a;
    Scalar trial;
    const Scalar denom = hi.slope - lo.slope;
    if (std::isfinite(denom) && std::abs(denom) > Scalar(0)) {
      trial = a - lo.slope * width / denom;
    } else {
      trial = a + Scalar(0.5) * width;
    }
    const Scalar lo_bound = std::min(a, b) + Scalar(0.05) * std::abs(width);
    const Scalar hi_bound = std::max(a, b) - Scalar(0.05) * std::abs(width);
    if (!(trial >= lo_bound && trial <= hi_bound)) trial = a + Scalar(0.5) * width;
    if (trial == a || trial == b) return false;

    LineSearchPoint<Scalar> p = probe(trial);
    if (!finite(p)) return false;
    if (!decrease_ok(p) || p.value > lo.value + f_slack) {
      hi = std::move(p);
      continue;
    }
    if (curvature_ok(p)) {
      out = std::move(p);
      return true;
    }
    if (p.slope * width >= Scalar(0)) hi = std::move(lo);
    lo = std::move(p);
  }
  return false;
}

}  // namespace detail

/// Limited-memory BFGS from `w0` until the gradient Frobenius norm is at
/// most `opts.tol`. Accepted steps never increase the objective beyond
/// 1e-12 relative (the rounding floor of the value).
template <typename Scalar, typename Objective>
  requires DifferentiableObjective<Objective, Scalar>
SolveResult<Scalar> solve_iterative(const Objective& objective,
                                    const Mat<Scalar>& w0,
                                    const IterativeOptions& opts = {}) {
  if (!(opts.tol > 0)) {
    throw Error(ErrorCode::InvalidArgument, "tol must be > 0");
  }
  if (opts.max_iter < 0) {
    throw Error(ErrorCode::InvalidArgument, "max_iter must be >= 0");
  }
  const Eigen::Index rows = w0.rows(), cols = w0.cols();
  const Scalar tol = Scalar(opts.tol);

  auto eval = [&](const Vec<Scalar>& x, Scalar& f, Vec<Scalar>& g) {
    const Mat<Scalar> w = unvec(x, rows, cols);
    f = objective.value(w);
    g = vec(objective.gradient(w));
  };

  SolveResult<Scalar> out;
  out.method = SolveMethod::Iterative;
  out.tolerance = tol;

  Vec<Scalar> x = vec(w0);
  Scalar f;
  Vec<Scalar> g;
  eval(x, f, g);
  if (!std::isfinite(f) || !g.allFinite()) {
    throw Error(ErrorCode::NonFiniteEncountered, "objective at w0 is not finite");
  }
  out.risk_trace.push_back(f);

  std::deque<Vec<Scalar>> s_hist, y_hist;
  std::deque<Scalar> rho_hist;
  int iter = 0;
  int consecutive_failures = 0;

  while (g.norm() > tol) {
    if (iter >= opts.max_iter) {
      std::ostringstream os;
      os << "no convergence after " << iter << " iterations, gradient norm "
         << g.norm();
      throw IterationLimitError<Scalar>(unvec(x, rows, cols), g.norm(), os.str());
    }

    // Two-loop recursion for d = -H g.
    Vec<Scalar> q = g;
    std::vector<Scalar> alphas(s_hist.size());
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      alphas[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alphas[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const Scalar beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alphas[i] - beta) * s_hist[i];
    }
    Vec<Scalar> dir = -q;
    Scalar alpha0 = Scalar(1);
    if (!(g.dot(dir) < Scalar(0)) || s_hist.empty()) {
      dir = -g;
      alpha0 = Scalar(1) / std::max(Scalar(1), g.norm());
      if (!s_hist.empty()) {
        s_hist.clear();
        y_hist.clear();
        rho_hist.clear();
      }
    }

    detail::LineSearchPoint<Scalar> next;
    if (!detail::wolfe_line_search<Scalar>(eval, x, f, g, dir, alpha0, next)) {
      if (++consecutive_failures > 2) {
        std::ostringstream os;
        os << "line search failed at iteration " << iter
           << ", gradient norm " << g.norm();
        throw IterationLimitError<Scalar>(unvec(x, rows, cols), g.norm(),
                                          os.str());
      }
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      ++iter;
      continue;
    }
    consecutive_failures = 0;

    Vec<Scalar> s = next.x - x;
    Vec<Scalar> y = next.grad - g;
    const Scalar sy = s.dot(y);
    if (sy > std::numeric_limits<Scalar>::epsilon() * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(Scalar(1) / sy);
      if (static_cast<int>(s_hist.size()) > opts.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    x = std::move(next.x);
    f = next.value;
    g = std::move(next.grad);
    out.risk_trace.push_back(f);
    ++iter;
  }

  out.w_opt = unvec(x, rows, cols);
  out.risk_at_opt = f;
  out.grad_norm_at_opt = g.norm();
  out.iterations = iter;
  return out;
}

/// Iterative solve of the chart's risk from W = 0.
template <typename Scalar>
SolveResult<Scalar> solve_iterative(const RiskSpec<Scalar>& spec,
                                    const Chart<Scalar>& chart,
                                    const IterativeOptions& opts = {}) {
  return solve_iterative<Scalar>(pullback_risk(spec, chart),
                                 Mat<Scalar>::Zero(spec.dim(), spec.dim()),
                                 opts);
}

template <typename Scalar>
SolveResult<Scalar> solve(const RiskSpec<Scalar>& spec,
                          const Chart<Scalar>& chart, SolveMethod method,
                          const IterativeOptions& opts = {}) {
  return method == SolveMethod::ClosedForm
             ? solve_closed_form(spec, chart)
             : solve_iterative(spec, chart, opts);
}

template <typename Scalar = double>
struct CombinedEstimate {
  Vec<Scalar> theta_star;
  ChartKind chart = ChartKind::FormA;
  Mat<Scalar> w_used;
};

/// Form A: (I - W) theta1 + W theta2. Form B: W theta1 + (I - W) theta2.
/// General charts: A1 theta1 + A2 theta2 with A2 = T^{-1}(W), A1 = I - A2.
template <typename Scalar>
CombinedEstimate<Scalar> combine(const Vec<Scalar>& theta1,
                                 const Vec<Scalar>& theta2,
                                 const Chart<Scalar>& chart,
                                 const Arg<Mat<Scalar>>& w) {
  const Eigen::Index k = chart.dim();
  detail::require_shape(theta1, k, 1, "theta1");
  detail::require_shape(theta2, k, 1, "theta2");
  detail::require_shape(w, k, k, "W");
  const Mat<Scalar> eye = Mat<Scalar>::Identity(k, k);

  CombinedEstimate<Scalar> out;
  out.chart = chart.kind();
  out.w_used = w;
  switch (chart.kind()) {
    case ChartKind::FormA:
      out.theta_star = (eye - w) * theta1 + w * theta2;
      break;
    case ChartKind::FormB:
      out.theta_star = w * theta1 + (eye - w) * theta2;
      break;
    case ChartKind::General: {
      const Mat<Scalar> a2 = apply(chart.from_chart(), w);
      out.theta_star = (eye - a2) * theta1 + a2 * theta2;
      break;
    }
  }
  return out;
}

}  // namespace metaeq
