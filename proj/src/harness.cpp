#include "metaeq/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <ostream>
#include <random>
#include <thread>

namespace metaeq {

namespace {

// SplitMix64 finaliser; derives independent sub-stream seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kGradStream = 1;
constexpr std::uint64_t kMapStream = 2;

double max_grad_rel_err(const RiskSpec<double>& spec, const Matrix& w,
                        const GradientFn& grad) {
  const Matrix analytic = grad ? grad(spec, w) : gradient(spec, w);
  return relative_frobenius_error(analytic, fd_gradient(spec, w));
}

}  // namespace

RiskSpec<double> generate_instance(Eigen::Index dim, std::uint64_t seed) {
  if (dim < 1) throw Error(ErrorCode::InvalidArgument, "dim must be >= 1");
  const Matrix sigma = random_spd<double>(2 * dim, seed, 0.05 * 2.0 * dim);
  const Matrix v1 = sigma.topLeftCorner(dim, dim);
  const Matrix c = sigma.topRightCorner(dim, dim);
  const Matrix v2 = sigma.bottomRightCorner(dim, dim);
  return build_risk_spec(build_model<double>(v1, v2, c));
}

RiskSpec<double> canonical_instance() {
  const Matrix v1{{2.0}}, v2{{1.0}}, c{{0.5}};
  return build_risk_spec(build_model<double>(v1, v2, c));
}

Vector placeholder_theta1(Eigen::Index dim) {
  return Vector::LinSpaced(dim, 1.0, static_cast<double>(dim));
}

Vector placeholder_theta2(Eigen::Index dim) {
  return Vector::LinSpaced(dim, static_cast<double>(dim + 1),
                           static_cast<double>(2 * dim));
}

VerificationReport run_verification(const RiskSpec<double>& spec,
                                    std::uint64_t seed, SolveMethod method,
                                    const VerificationThresholds& thresholds,
                                    const Vector& theta1,
                                    const Vector& theta2) {
  const Eigen::Index k = spec.dim();
  const auto chart_a = Chart<double>::form_a(k);
  const auto chart_b = Chart<double>::form_b(k);

  const SolveResult<double> sol_a = solve(spec, chart_a, method);
  const SolveResult<double> sol_b = solve(spec, chart_b, method);

  const Matrix eye = Matrix::Identity(k, k);
  VerificationReport r;
  r.seed = seed;
  r.dim = k;
  r.solver_method = method;
  r.weight_covariance_residual = (sol_b.w_opt - (eye - sol_a.w_opt)).norm();
  r.estimator_gap = (combine(theta1, theta2, chart_a, sol_a.w_opt).theta_star -
                     combine(theta1, theta2, chart_b, sol_b.w_opt).theta_star)
                        .norm();
  r.risk_gap = std::abs(risk(spec, sol_a.w_opt) -
                        pullback_risk(spec, chart_b).value(sol_b.w_opt));

  std::mt19937_64 rng(mix_seed(seed, kGradStream));
  const Matrix w_rand = standard_normal(k, k, rng);
  r.grad_check_rel_err =
      std::max(max_grad_rel_err(spec, Matrix::Zero(k, k), {}),
               max_grad_rel_err(spec, w_rand, {}));
  r.hessian_min_eig = hessian(spec).certificate.hessian_min_eigenvalue;

  const bool finite = std::isfinite(r.weight_covariance_residual) &&
                      std::isfinite(r.estimator_gap) &&
                      std::isfinite(r.risk_gap) &&
                      std::isfinite(r.grad_check_rel_err) &&
                      std::isfinite(r.hessian_min_eig);
  r.pass = finite &&
           r.weight_covariance_residual <= thresholds.weight_covariance &&
           r.estimator_gap <= thresholds.estimator_gap &&
           r.risk_gap <= thresholds.risk_gap &&
           r.grad_check_rel_err <= thresholds.grad_check_rel_err &&
           r.hessian_min_eig > 0;
  return r;
}

VerificationReport run_verification(Eigen::Index dim, std::uint64_t seed,
                                    SolveMethod method,
                                    const VerificationThresholds& thresholds) {
  return run_verification(generate_instance(dim, seed), seed, method,
                          thresholds, placeholder_theta1(dim),
                          placeholder_theta2(dim));
}

std::vector<VerificationReport> run_verification_batch(
    Eigen::Index dim, std::uint64_t first_seed, std::size_t n_seeds,
    SolveMethod method, const VerificationThresholds& thresholds,
    unsigned threads, const std::optional<RiskSpec<double>>& instance) {
  std::vector<VerificationReport> reports(n_seeds);
  std::vector<std::exception_ptr> errors(n_seeds);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < n_seeds; i = next++) {
      const std::uint64_t seed = first_seed + i;
      try {
        if (instance) {
          const Eigen::Index k = instance->dim();
          reports[i] = run_verification(*instance, seed, method, thresholds,
                                        placeholder_theta1(k),
                                        placeholder_theta2(k));
        } else {
          reports[i] = run_verification(dim, seed, method, thresholds);
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  const unsigned n_workers = std::clamp<unsigned>(
      threads, 1, static_cast<unsigned>(std::max<std::size_t>(n_seeds, 1)));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n_workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::sort(reports.begin(), reports.end(),
            [](const auto& a, const auto& b) { return a.seed < b.seed; });
  return reports;
}

void check_transport(const RiskSpec<double>& spec, const AffineMap<double>& t,
                     SolveMethod method, const Vector& theta1,
                     const Vector& theta2, EquivarianceResult& out) {
  const Eigen::Index k = spec.dim();
  const auto base_chart = Chart<double>::form_a(k);
  const auto chart = Chart<double>::general(t);
  const auto pulled = pullback_risk(spec, chart);

  Matrix w_base, w_chart;
  if (method == SolveMethod::ClosedForm) {
    w_base = solve_closed_form(spec, base_chart).w_opt;
    // Exact Newton step from 0 on the pulled-back quadratic.
    const Matrix zero = Matrix::Zero(k, k);
    const Matrix h = pulled.hessian();
    Eigen::LLT<Matrix> llt(h);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorCode::MNotSpd, "pulled-back Hessian is not SPD");
    }
    w_chart = unvec(Vector(-llt.solve(vec(pulled.gradient(zero)))), k, k);
  } else {
    w_base = solve_iterative(spec, base_chart).w_opt;
    w_chart = solve_iterative<double>(pulled, Matrix::Zero(k, k)).w_opt;
  }

  const Matrix transported = apply(t, w_base);
  const double residual = (w_chart - transported).norm();
  out.transport_residuals.push_back(residual);
  out.relative_residuals.push_back(residual / (1.0 + transported.norm()));
  out.estimator_gaps.push_back(
      (combine(theta1, theta2, chart, w_chart).theta_star -
       combine(theta1, theta2, base_chart, w_base).theta_star)
          .norm());
}

EquivarianceResult run_general_equivariance(const RiskSpec<double>& spec,
                                            std::uint64_t seed,
                                            std::size_t n_maps,
                                            SolveMethod method) {
  if (n_maps < 1) throw Error(ErrorCode::InvalidArgument, "n_maps must be >= 1");
  const Eigen::Index k = spec.dim();
  const Vector theta1 = placeholder_theta1(k);
  const Vector theta2 = placeholder_theta2(k);
  std::mt19937_64 rng(mix_seed(seed, kMapStream));
  EquivarianceResult out;
  for (std::size_t i = 0; i < n_maps; ++i) {
    check_transport(spec, random_affine_map<double>(k, rng), method, theta1,
                    theta2, out);
  }
  return out;
}

EquivarianceResult run_general_equivariance(Eigen::Index dim,
                                            std::uint64_t seed,
                                            std::size_t n_maps,
                                            SolveMethod method) {
  return run_general_equivariance(generate_instance(dim, seed), seed, n_maps,
                                  method);
}

SweepData run_sweep(const RiskSpec<double>& spec, double grid_min,
                    double grid_max, std::size_t n_points) {
  if (n_points < 2) throw Error(ErrorCode::InvalidArgument, "points must be >= 2");
  if (!(grid_max > grid_min)) {
    throw Error(ErrorCode::InvalidArgument, "grid max must exceed grid min");
  }
  const Eigen::Index k = spec.dim();
  const Matrix eye = Matrix::Identity(k, k);
  const auto chart_b = pullback_risk(spec, Chart<double>::form_b(k));

  SweepData s;
  s.grid_step = (grid_max - grid_min) / static_cast<double>(n_points - 1);
  s.grid.reserve(n_points);
  s.f_values.reserve(n_points);
  s.g_values.reserve(n_points);
  double max_abs_f = 0;
  for (std::size_t i = 0; i < n_points; ++i) {
    const double w = grid_min + static_cast<double>(i) * s.grid_step;
    const double f = risk(spec, Matrix(w * eye));
    const double g = chart_b.value(Matrix(w * eye));
    const double mirrored = risk(spec, Matrix((1.0 - w) * eye));
    s.grid.push_back(w);
    s.f_values.push_back(f);
    s.g_values.push_back(g);
    max_abs_f = std::max(max_abs_f, std::abs(f));
    s.max_mirror_residual = std::max(s.max_mirror_residual, std::abs(g - mirrored));
  }
  const auto argmin = [&](const std::vector<double>& v) {
    return s.grid[static_cast<std::size_t>(
        std::min_element(v.begin(), v.end()) - v.begin())];
  };
  s.argmin_f = argmin(s.f_values);
  s.argmin_g = argmin(s.g_values);
  s.mirror_tolerance = 1e-10 * (1.0 + max_abs_f);
  s.mirror_ok = s.max_mirror_residual <= s.mirror_tolerance;
  s.minima_ok =
      std::abs(s.argmin_g - (1.0 - s.argmin_f)) <= s.grid_step * (1.0 + 1e-9);
  return s;
}

GradCheckReport check_gradient(const RiskSpec<double>& spec,
                               std::size_t trials, std::uint64_t seed,
                               const GradientFn& grad) {
  if (trials < 1) throw Error(ErrorCode::InvalidArgument, "trials must be >= 1");
  const Eigen::Index k = spec.dim();
  std::mt19937_64 rng(mix_seed(seed, kGradStream));

  GradCheckReport r;
  r.trials = trials;
  r.richardson_ratio_min = std::numeric_limits<double>::infinity();
  r.richardson_ratio_max = 0;
  const std::size_t richardson_points = std::min<std::size_t>(trials, 10);

  for (std::size_t t = 0; t < trials; ++t) {
    const Matrix w = standard_normal(k, k, rng);
    const Matrix analytic = grad ? grad(spec, w) : gradient(spec, w);
    r.max_rel_err = std::max(
        r.max_rel_err, relative_frobenius_error(analytic, fd_gradient(spec, w)));

    if (t < richardson_points) {
      // Central differences are exact on the quadratic risk itself, so the
      // order check runs on log R, whose gradient is grad R / R.
      const double value = risk(spec, w);
      const Matrix log_grad = analytic / value;
      const auto log_risk = [&](const Matrix& x) { return std::log(risk(spec, x)); };
      constexpr double h = 1e-3;
      const double e_h =
          (fd_gradient_of<double>(log_risk, w, h) - log_grad).norm();
      const double e_half =
          (fd_gradient_of<double>(log_risk, w, h / 2) - log_grad).norm();
      const double ratio = e_h / e_half;
      r.richardson_ratio_min = std::min(r.richardson_ratio_min, ratio);
      r.richardson_ratio_max = std::max(r.richardson_ratio_max, ratio);
    }
  }
  r.pass = std::isfinite(r.max_rel_err) && r.max_rel_err <= r.threshold;
  r.richardson_ok = r.richardson_ratio_min >= 3.5 && r.richardson_ratio_max <= 4.5;
  return r;
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

std::string verification_csv_header() {
  return "seed,dim,method,weight_covariance_residual,estimator_gap,risk_gap,"
         "grad_check_rel_err,hessian_min_eig,pass";
}

std::string to_csv_row(const VerificationReport& r) {
  std::string row = std::to_string(r.seed) + "," + std::to_string(r.dim) + "," +
                    to_string(r.solver_method);
  for (double v : {r.weight_covariance_residual, r.estimator_gap, r.risk_gap,
                   r.grad_check_rel_err, r.hessian_min_eig}) {
    row += "," + format_double(v);
  }
  row += r.pass ? ",true" : ",false";
  return row;
}

void write_verification_csv(std::ostream& os,
                            const std::vector<VerificationReport>& reports) {
  os << verification_csv_header() << '\n';
  for (const auto& r : reports) os << to_csv_row(r) << '\n';
}

void write_sweep_csv(std::ostream& os, const SweepData& sweep) {
  os << "w,f,g\n";
  for (std::size_t i = 0; i < sweep.grid.size(); ++i) {
    os << format_double(sweep.grid[i]) << ',' << format_double(sweep.f_values[i])
       << ',' << format_double(sweep.g_values[i]) << '\n';
  }
}

}  // namespace metaeq
