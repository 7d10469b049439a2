#include "metaeq/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include "metaeq/problem_io.hpp"

namespace metaeq::cli {

namespace {

using nlohmann::json;

unsigned thread_cap() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("META_EQUIV_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(v));
  }
  return n;
}

SolveMethod parse_method(const std::string& s) {
  return s == "closed" ? SolveMethod::ClosedForm : SolveMethod::Iterative;
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error(ErrorCode::InvalidArgument, "cannot write " + path);
  return f;
}

struct GenArgs {
  long long dim = 3;
  std::uint64_t seed = 0;
  std::string out;
};

struct SolveArgs {
  std::string problem;
  std::string form = "A";
  std::string solver = "closed";
  double tol = 1e-10;
  int max_iter = 10000;
};

struct VerifyArgs {
  long long dim = 3;
  std::size_t seeds = 100;
  std::uint64_t first_seed = 0;
  std::string solver = "iterative";
  std::string out;
  std::string problem;
};

struct SweepArgs {
  std::string problem;
  double min = 0.0;
  double max = 1.0;
  std::size_t points = 1001;
  std::string out;
};

struct GradCheckArgs {
  std::string problem;
  std::size_t trials = 100;
  std::uint64_t seed = 0;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  const ProblemFile p = generate_problem(a.dim, a.seed);
  write_problem_file(a.out, p);
  out << json{{"out", a.out}, {"dim", a.dim}, {"seed", a.seed}}.dump() << '\n';
  return kOk;
}

int cmd_solve(const SolveArgs& a, std::ostream& out) {
  const RiskSpec<double> spec = to_risk_spec(read_problem_file(a.problem));
  const auto chart = a.form == "B" ? Chart<double>::form_b(spec.dim())
                                   : Chart<double>::form_a(spec.dim());
  IterativeOptions opts;
  opts.tol = a.tol;
  opts.max_iter = a.max_iter;
  const SolveResult<double> r = solve(spec, chart, parse_method(a.solver), opts);
  json doc{{"form", a.form},
           {"solver", a.solver},
           {"w_opt", matrix_json(r.w_opt)},
           {"risk", r.risk_at_opt},
           {"grad_norm", r.grad_norm_at_opt},
           {"iterations", r.iterations}};
  out << doc.dump() << '\n';
  return kOk;
}

int cmd_verify(const VerifyArgs& a, std::ostream& out, std::ostream& err) {
  const SolveMethod method = parse_method(a.solver);
  std::optional<RiskSpec<double>> instance;
  Eigen::Index dim = a.dim;
  if (!a.problem.empty()) {
    instance = to_risk_spec(read_problem_file(a.problem));
    dim = instance->dim();
  }
  const auto thresholds = VerificationThresholds::for_method(method);
  const auto reports = run_verification_batch(dim, a.first_seed, a.seeds, method,
                                              thresholds, thread_cap(), instance);

  json summary{{"dim", dim},
               {"seeds", a.seeds},
               {"solver", to_string(method)},
               {"max_weight_covariance_residual", 0.0},
               {"max_estimator_gap", 0.0},
               {"max_risk_gap", 0.0},
               {"max_grad_check_rel_err", 0.0},
               {"min_hessian_min_eig", std::numeric_limits<double>::infinity()}};
  std::size_t failed = 0;
  double max_w = 0, max_e = 0, max_r = 0, max_g = 0;
  double min_h = std::numeric_limits<double>::infinity();
  for (const auto& r : reports) {
    max_w = std::max(max_w, r.weight_covariance_residual);
    max_e = std::max(max_e, r.estimator_gap);
    max_r = std::max(max_r, r.risk_gap);
    max_g = std::max(max_g, r.grad_check_rel_err);
    min_h = std::min(min_h, r.hessian_min_eig);
    if (!r.pass) ++failed;
  }
  summary["max_weight_covariance_residual"] = max_w;
  summary["max_estimator_gap"] = max_e;
  summary["max_risk_gap"] = max_r;
  summary["max_grad_check_rel_err"] = max_g;
  summary["min_hessian_min_eig"] = min_h;
  summary["failed"] = failed;
  summary["pass"] = failed == 0;

  if (a.out.empty()) {
    write_verification_csv(out, reports);
    err << summary.dump() << '\n';
  } else {
    auto f = open_output(a.out);
    write_verification_csv(f, reports);
    out << summary.dump() << '\n';
  }
  return failed == 0 ? kOk : kCheckFailed;
}

int cmd_sweep(const SweepArgs& a, std::ostream& out, std::ostream& err) {
  const RiskSpec<double> spec = to_risk_spec(read_problem_file(a.problem));
  const SweepData s = run_sweep(spec, a.min, a.max, a.points);
  json summary{{"points", a.points},
               {"argmin_f", s.argmin_f},
               {"argmin_g", s.argmin_g},
               {"grid_step", s.grid_step},
               {"max_mirror_residual", s.max_mirror_residual},
               {"mirror_tolerance", s.mirror_tolerance},
               {"mirror_ok", s.mirror_ok},
               {"minima_ok", s.minima_ok}};
  if (a.out.empty()) {
    write_sweep_csv(out, s);
    err << summary.dump() << '\n';
  } else {
    auto f = open_output(a.out);
    write_sweep_csv(f, s);
    out << summary.dump() << '\n';
  }
  return s.mirror_ok && s.minima_ok ? kOk : kCheckFailed;
}

int cmd_grad_check(const GradCheckArgs& a, std::ostream& out) {
  const RiskSpec<double> spec = to_risk_spec(read_problem_file(a.problem));
  const GradCheckReport r = check_gradient(spec, a.trials, a.seed);
  json doc{{"trials", r.trials},
           {"max_rel_err", r.max_rel_err},
           {"threshold", r.threshold},
           {"richardson_ratio_min", r.richardson_ratio_min},
           {"richardson_ratio_max", r.richardson_ratio_max},
           {"richardson_ok", r.richardson_ok},
           {"pass", r.pass}};
  out << doc.dump() << '\n';
  return exit_code_for(r);
}

}  // namespace

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::AssumptionA1Violated:
    case ErrorCode::AssumptionA2Violated:
    case ErrorCode::OmegaNotSpd:
    case ErrorCode::MNotSpd:
    case ErrorCode::NotSquare:
    case ErrorCode::NotSymmetric:
    case ErrorCode::NotPositiveDefinite:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::ParseError:
      return kAssumption;
    case ErrorCode::MaxIterationsExceeded:
      return kMaxIterations;
    default:
      return kRuntime;
  }
}

int exit_code_for(const GradCheckReport& report) {
  return report.pass ? kOk : kCheckFailed;
}

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Optimal two-estimator combination under trace-AMSE risk"};
  app.name(args.empty() ? "metaequiv" : args.front());
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Write a seeded random problem file");
  gen_cmd->add_option("--dim", gen.dim, "Parameter dimension K")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "RNG seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output JSON path")->required();

  SolveArgs sol;
  auto* solve_cmd = app.add_subcommand("solve", "Minimise the risk in one chart");
  solve_cmd->add_option("--problem", sol.problem, "Problem JSON")
      ->required()
      ->check(CLI::ExistingFile);
  solve_cmd->add_option("--form", sol.form, "Chart")
      ->check(CLI::IsMember({"A", "B"}))
      ->capture_default_str();
  solve_cmd->add_option("--solver", sol.solver, "Method")
      ->check(CLI::IsMember({"closed", "iterative"}))
      ->capture_default_str();
  solve_cmd->add_option("--tol", sol.tol, "Gradient-norm tolerance (iterative)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  solve_cmd->add_option("--max-iter", sol.max_iter, "Iteration cap (iterative)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  VerifyArgs ver;
  auto* verify_cmd =
      app.add_subcommand("verify", "Paired Form-A/Form-B runs over many seeds");
  verify_cmd->add_option("--dim", ver.dim, "Parameter dimension K")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  verify_cmd->add_option("--seeds", ver.seeds, "Number of seeds")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  verify_cmd->add_option("--first-seed", ver.first_seed, "First seed")
      ->capture_default_str();
  verify_cmd->add_option("--solver", ver.solver, "Method")
      ->check(CLI::IsMember({"closed", "iterative"}))
      ->capture_default_str();
  verify_cmd->add_option("--out", ver.out, "Report CSV path (stdout if omitted)");
  verify_cmd->add_option("--problem", ver.problem,
                         "Use this problem instead of generated instances")
      ->check(CLI::ExistingFile);

  SweepArgs swp;
  auto* sweep_cmd =
      app.add_subcommand("sweep", "Scalar sweep f(w) = R(wI), g(w) = R((1-w)I)");
  sweep_cmd->add_option("--problem", swp.problem, "Problem JSON")
      ->required()
      ->check(CLI::ExistingFile);
  sweep_cmd->add_option("--min", swp.min, "Grid minimum")->capture_default_str();
  sweep_cmd->add_option("--max", swp.max, "Grid maximum")->capture_default_str();
  sweep_cmd->add_option("--points", swp.points, "Grid points (>= 2)")
      ->check(CLI::Range(std::size_t{2}, std::numeric_limits<std::size_t>::max()))
      ->capture_default_str();
  sweep_cmd->add_option("--out", swp.out, "CSV path (stdout if omitted)");

  GradCheckArgs gc;
  auto* grad_cmd =
      app.add_subcommand("grad-check", "Analytic vs central-difference gradient");
  grad_cmd->add_option("--problem", gc.problem, "Problem JSON")
      ->required()
      ->check(CLI::ExistingFile);
  grad_cmd->add_option("--trials", gc.trials, "Random evaluation points")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  grad_cmd->add_option("--seed", gc.seed, "RNG seed")->capture_default_str();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen(gen, out);
    if (*solve_cmd) return cmd_solve(sol, out);
    if (*verify_cmd) return cmd_verify(ver, out, err);
    if (*sweep_cmd) return cmd_sweep(swp, out, err);
    if (*grad_cmd) return cmd_grad_check(gc, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}

}  // namespace metaeq::cli
