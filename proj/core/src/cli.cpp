#include "ihmpc/cli.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <optional>
#include <ostream>
#include <random>

#include "CLI11.hpp"
#include "ihmpc/qp.hpp"
#include "ihmpc/scenario.hpp"

namespace ihmpc {

namespace {

const char* yes_no(bool b) { return b ? "true" : "false"; }

void print_errors(std::ostream& err, const Error& e) {
  if (const auto* se = dynamic_cast<const ScenarioError*>(&e)) {
    err << "invalid scenario:\n";
    for (const std::string& s : se->errors()) err << "  " << s << "\n";
  } else {
    err << "error: " << e.what() << "\n";
  }
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_path, int steps_override,
                 std::ostream& out, std::ostream& err) {
  std::optional<ResolvedScenario> rs;
  int steps = 0;
  try {
    const Scenario sc = load_scenario(scenario_path);
    rs.emplace(resolve(sc));
    steps = steps_override > 0 ? steps_override : sc.steps;
  } catch (const Error& e) {
    print_errors(err, e);
    return kExitUsage;
  }
  const ClosedLoopTrace trace = run_closed_loop(rs->spec, rs->initial_state, steps);
  if (!out_path.empty()) {
    try {
      write_trace(trace, out_path);
    } catch (const Error& e) {
      print_errors(err, e);
      return kExitCheckFailed;
    }
  }
  if (trace.records.empty()) {
    err << "solver failed before the first step: " << trace.failure.value_or("unknown") << "\n";
    return kExitCheckFailed;
  }
  const AnalysisReport rep = analyze(trace);
  out << "steps=" << trace.records.size() << " V_final=" << format_double(rep.V_final)
      << " converged=" << yes_no(rep.converged) << "\n";
  if (trace.failure) {
    err << "solver failure: " << *trace.failure << "\n";
    return kExitCheckFailed;
  }
  return kExitOk;
}

int cmd_certify(const std::string& scenario_path, const std::string& out_path, std::ostream& out,
                std::ostream& err) {
  std::optional<ResolvedScenario> rs;
  try {
    rs.emplace(resolve(load_scenario(scenario_path)));
  } catch (const Error& e) {
    print_errors(err, e);
    return kExitUsage;
  }
  const CertificateBundle& b = rs->certificates;
  if (out_path.empty()) {
    out << certificates_to_string(b);
  } else {
    try {
      write_certificates(b, out_path);
    } catch (const Error& e) {
      print_errors(err, e);
      return kExitCheckFailed;
    }
  }
  bool ok = b.lyapunov_ok && b.g_identity_ok;
  if (b.kind == CertificateKind::kSetpoint) {
    out << "beta=" << format_double(b.beta) << " C3=" << format_double(b.C3)
        << " phi=" << format_double(b.phi) << (b.phi_heuristic ? " (sampled)" : "")
        << " beta_ok=" << yes_no(b.beta_ok)
        << " reference_admissible=" << yes_no(b.reference_admissible) << "\n";
    ok = ok && b.beta_ok;
  } else {
    out << "su_ok=" << yes_no(b.su_ok) << " target_admissible=" << yes_no(b.target_admissible) << "\n";
    ok = ok && b.su_ok;
  }
  return ok ? kExitOk : kExitCheckFailed;
}

struct TolFlags {
  double monotone = NAN, identity = NAN, bound = NAN, converge = NAN, limit = NAN, target = NAN,
         consistency = NAN;
};

int cmd_check(const std::string& trace_path, const std::string& scenario_path, const TolFlags& flags,
              std::ostream& out, std::ostream& err) {
  std::optional<ResolvedScenario> rs;
  AnalysisTolerances tol;
  try {
    const Scenario sc = load_scenario(scenario_path);
    tol = sc.tolerances;
    rs.emplace(resolve(sc));
  } catch (const Error& e) {
    print_errors(err, e);
    return kExitUsage;
  }
  auto apply = [](double flag, double& dst) {
    if (!std::isnan(flag)) dst = flag;
  };
  apply(flags.monotone, tol.monotone);
  apply(flags.identity, tol.identity);
  apply(flags.bound, tol.bound);
  apply(flags.converge, tol.converge);
  apply(flags.limit, tol.limit);
  apply(flags.target, tol.target);
  apply(flags.consistency, tol.consistency);

  std::optional<ClosedLoopTrace> loaded;
  try {
    loaded.emplace(read_trace(trace_path, rs->spec, rs->initial_state));
  } catch (const Error& e) {
    print_errors(err, e);
    return kExitCheckFailed;
  }
  const ClosedLoopTrace& trace = *loaded;
  if (trace.records.empty()) {
    err << "trace has no records\n";
    return kExitCheckFailed;
  }
  const AnalysisReport rep = analyze(trace, tol);
  out << "assumptions_met=" << yes_no(rep.assumptions_met) << " steps=" << rep.steps << "\n";
  for (const CheckResult& c : rep.checks) {
    out << std::left << std::setw(22) << c.name << " " << std::setw(24) << format_double(c.value)
        << " <= " << std::setw(8) << format_double(c.threshold) << " "
        << (!c.applicable ? "n/a" : c.passed ? "PASS" : "FAIL") << "\n";
  }
  return rep.all_applicable_passed() ? kExitOk : kExitCheckFailed;
}

// Random strictly convex QP with n <= 4 and a known feasible point.
QuadProgram random_qp(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dim(1, 4);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> width(0.1, 2.0);
  const int n = dim(rng);
  Matrix A(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) A(i, j) = unit(rng);
  }
  Vector q(n);
  for (int i = 0; i < n; ++i) q[i] = 3.0 * unit(rng);
  QuadProgram qp = make_qp(A.transpose() * A + 0.1 * Matrix::Identity(n, n), q);

  Vector feas(n);
  for (int i = 0; i < n; ++i) feas[i] = unit(rng);
  const int p = std::uniform_int_distribution<int>(0, std::min(2, n - 1))(rng);
  qp.Aeq = Matrix(p, n);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < n; ++j) qp.Aeq(i, j) = unit(rng);
  }
  qp.beq = qp.Aeq * feas;

  qp.Aineq = Matrix::Zero(n + 1, n);
  qp.lo = Vector(n + 1);
  qp.hi = Vector(n + 1);
  for (int i = 0; i < n; ++i) {
    qp.Aineq(i, i) = 1.0;
    qp.lo[i] = feas[i] - width(rng);
    qp.hi[i] = feas[i] + width(rng);
  }
  for (int j = 0; j < n; ++j) qp.Aineq(n, j) = unit(rng);
  const double a = qp.Aineq.row(n).dot(feas);
  qp.lo[n] = a - 0.5 * width(rng);
  qp.hi[n] = a + 0.5 * width(rng);
  return qp;
}

int cmd_qp_verify(int instances, std::uint64_t seed, std::ostream& out, std::ostream& err) {
  if (instances < 1) {
    err << "--instances must be at least 1\n";
    return kExitUsage;
  }
  std::mt19937_64 rng(seed);
  double max_gap = 0.0;
  int failures = 0;
  for (int i = 0; i < instances; ++i) {
    const QuadProgram qp = random_qp(rng);
    const QpSolution sol = solve(qp);
    if (sol.status != QpStatus::kOptimal) {
      ++failures;
      continue;
    }
    const double oracle = qp.objective(brute_force(qp));
    max_gap = std::max(max_gap, std::abs(sol.objective - oracle) / (1.0 + std::abs(oracle)));
  }
  out << "instances=" << instances << " solver_failures=" << failures
      << " max_gap=" << format_double(max_gap) << "\n";
  return failures == 0 && max_gap <= 1e-6 ? kExitOk : kExitCheckFailed;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Infinite-horizon and zone-control MPC with stability certificates", "ihmpc"};
  app.require_subcommand(1);

  std::string scenario_path, out_path, trace_path;
  int steps = 0;
  auto* simulate = app.add_subcommand("simulate", "Run the closed loop and write a CSV trace");
  simulate->add_option("scenario", scenario_path, "Scenario document")->required();
  simulate->add_option("--out", out_path, "Trace CSV path");
  simulate->add_option("--steps", steps, "Override the scenario step count")->check(CLI::PositiveNumber);

  auto* certify = app.add_subcommand("certify", "Compute the stability certificate document");
  certify->add_option("scenario", scenario_path, "Scenario document")->required();
  certify->add_option("--out", out_path, "Certificate document path");

  TolFlags tol;
  auto* check = app.add_subcommand("check", "Analyze a trace against the convergence and bound checks");
  check->add_option("trace", trace_path, "Trace CSV")->required();
  check->add_option("scenario", scenario_path, "Scenario document")->required();
  check->add_option("--tol-monotone", tol.monotone);
  check->add_option("--tol-identity", tol.identity);
  check->add_option("--tol-bound", tol.bound);
  check->add_option("--tol-converge", tol.converge);
  check->add_option("--tol-limit", tol.limit);
  check->add_option("--tol-target", tol.target);
  check->add_option("--tol-consistency", tol.consistency);

  int instances = 500;
  std::uint64_t seed = 1;
  auto* verify = app.add_subcommand("qp-verify", "Compare the QP solver with the brute-force oracle");
  verify->add_option("--instances", instances, "Number of random QPs");
  verify->add_option("--seed", seed, "Random seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  if (simulate->parsed()) return cmd_simulate(scenario_path, out_path, steps, out, err);
  if (certify->parsed()) return cmd_certify(scenario_path, out_path, out, err);
  if (check->parsed()) return cmd_check(trace_path, scenario_path, tol, out, err);
  if (verify->parsed()) return cmd_qp_verify(instances, seed, out, err);
  err << app.help();
  return kExitUsage;
}

}  // namespace ihmpc
