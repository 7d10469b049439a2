#pragma once

// Simulation harness: seeded instances, paired Form-A/Form-B solves with
// residual reports, random-chart equivariance runs, scalar sweeps and the
// gradient oracle gate.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "metaeq/model.hpp"
#include "metaeq/reparam.hpp"
#include "metaeq/risk.hpp"
#include "metaeq/solver.hpp"

namespace metaeq {

/// Sigma = random_spd(2K, seed, 0.05 * 2K) partitioned into V1, C, V2;
/// zero bias, Omega = I.
RiskSpec<double> generate_instance(Eigen::Index dim, std::uint64_t seed);

/// K = 1: v1 = 2, v2 = 1, c = 0.5, zero bias, Omega = 1.
RiskSpec<double> canonical_instance();

/// theta1 = [1..K], theta2 = [K+1..2K].
Vector placeholder_theta1(Eigen::Index dim);
Vector placeholder_theta2(Eigen::Index dim);

struct VerificationThresholds {
  double weight_covariance;
  double estimator_gap;
  double risk_gap;
  double grad_check_rel_err = 1e-5;

  static VerificationThresholds iterative() { return {1e-6, 1e-5, 1e-10}; }
  static VerificationThresholds closed_form() { return {1e-10, 1e-10, 1e-10}; }
  static VerificationThresholds for_method(SolveMethod method) {
    return method == SolveMethod::ClosedForm ? closed_form() : iterative();
  }
};

struct VerificationReport {
  std::uint64_t seed = 0;
  Eigen::Index dim = 0;
  SolveMethod solver_method = SolveMethod::ClosedForm;
  /// ||W_B,opt - (I - W_A,opt)||_F
  double weight_covariance_residual = 0;
  /// ||theta*_A - theta*_B||_2
  double estimator_gap = 0;
  /// |R_A(W_A,opt) - R_B(W_B,opt)|
  double risk_gap = 0;
  double grad_check_rel_err = 0;
  double hessian_min_eig = 0;
  bool pass = false;

  bool operator==(const VerificationReport&) const = default;
};

VerificationReport run_verification(const RiskSpec<double>& spec,
                                    std::uint64_t seed, SolveMethod method,
                                    const VerificationThresholds& thresholds,
                                    const Vector& theta1, const Vector& theta2);

/// Generated instance with placeholder estimators.
VerificationReport run_verification(Eigen::Index dim, std::uint64_t seed,
                                    SolveMethod method,
                                    const VerificationThresholds& thresholds);

/// Runs seeds [first_seed, first_seed + n_seeds) on up to `threads`
/// workers. The result is sorted by seed. `instance` overrides the
/// generated problem when set.
std::vector<VerificationReport> run_verification_batch(
    Eigen::Index dim, std::uint64_t first_seed, std::size_t n_seeds,
    SolveMethod method, const VerificationThresholds& thresholds,
    unsigned threads,
    const std::optional<RiskSpec<double>>& instance = std::nullopt);

struct EquivarianceResult {
  /// ||argmin(pullback through T) - T(argmin(base))||_F per map.
  std::vector<double> transport_residuals;
  /// Same residual divided by (1 + ||T(argmin(base))||_F).
  std::vector<double> relative_residuals;
  /// ||theta*(chart T) - theta*(Form A)||_2 per map.
  std::vector<double> estimator_gaps;
};

/// Transport check for one map. The pulled-back argmin is computed
/// without using T(W_base): iteratively from W = 0, or for the closed
/// form by one exact Newton step with the pulled-back Kronecker Hessian.
void check_transport(const RiskSpec<double>& spec, const AffineMap<double>& t,
                     SolveMethod method, const Vector& theta1,
                     const Vector& theta2, EquivarianceResult& out);

EquivarianceResult run_general_equivariance(const RiskSpec<double>& spec,
                                            std::uint64_t seed,
                                            std::size_t n_maps,
                                            SolveMethod method);

EquivarianceResult run_general_equivariance(Eigen::Index dim,
                                            std::uint64_t seed,
                                            std::size_t n_maps,
                                            SolveMethod method);

struct SweepData {
  std::vector<double> grid;
  /// f(w) = R(w I)
  std::vector<double> f_values;
  /// g(w) = Form-B pullback at w I, i.e. R((1 - w) I)
  std::vector<double> g_values;
  double argmin_f = 0;
  double argmin_g = 0;
  double grid_step = 0;
  /// max_w |g(w) - f(1 - w)|
  double max_mirror_residual = 0;
  double mirror_tolerance = 0;
  bool mirror_ok = false;
  /// |argmin_g - (1 - argmin_f)| within one grid step.
  bool minima_ok = false;
};

SweepData run_sweep(const RiskSpec<double>& spec, double grid_min,
                    double grid_max, std::size_t n_points);

using GradientFn =
    std::function<Matrix(const RiskSpec<double>&, const Matrix&)>;

struct GradCheckReport {
  std::size_t trials = 0;
  /// max ||grad - fd||_F / (1 + ||grad||_F)
  double max_rel_err = 0;
  /// Error ratio e(h) / e(h/2) of central differences on log R against
  /// grad / R; min and max over the probed points.
  double richardson_ratio_min = 0;
  double richardson_ratio_max = 0;
  double threshold = 1e-5;
  bool pass = false;
  bool richardson_ok = false;
};

/// Compares `grad` (the analytic gradient by default) with central
/// differences at `trials` seeded random W.
GradCheckReport check_gradient(const RiskSpec<double>& spec,
                               std::size_t trials, std::uint64_t seed,
                               const GradientFn& grad = {});

/// Fixed CSV header for verification reports.
std::string verification_csv_header();
std::string to_csv_row(const VerificationReport& report);
void write_verification_csv(std::ostream& os,
                            const std::vector<VerificationReport>& reports);
void write_sweep_csv(std::ostream& os, const SweepData& sweep);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double value);

}  // namespace metaeq
