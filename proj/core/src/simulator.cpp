#include "ihmpc/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "ihmpc/error.hpp"

namespace ihmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

const OpomModel& model_of(const ControllerSpec& spec) {
  return std::visit([](const auto& s) -> const OpomModel& { return s.model(); }, spec);
}

StepRecord record_step(const SetpointSpec& spec, const PlantState& state, const QpSettings& settings) {
  const SetpointSolution sol = solve_step(spec, state, settings);
  StepRecord rec;
  rec.du = sol.du;
  rec.delta = sol.delta;
  rec.V_star = sol.V_star;
  rec.kkt_residual = sol.kkt_residual;
  return rec;
}

StepRecord record_step(const ZoneSpec& spec, const PlantState& state, const QpSettings& settings) {
  const ZoneSolution sol = solve_step_zone(spec, state, settings);
  StepRecord rec;
  rec.du = sol.du;
  rec.y_sp = sol.y_sp;
  rec.delta_y = sol.delta_y;
  rec.delta_u = sol.delta_u;
  rec.V_star = sol.V_star;
  rec.kkt_residual = sol.kkt_residual;
  return rec;
}

SetpointSolution rebuild(const SetpointSpec& spec, const StepRecord& rec) {
  SetpointSolution sol;
  sol.state = rec.state_before;
  sol.du = rec.du;
  sol.delta = rec.delta;
  sol.V_star = rec.V_star;
  sol.predicted = predict(spec.model(), rec.state_before, rec.du);
  sol.e0 = sol.predicted.y[0] - spec.reference();
  return sol;
}

ZoneSolution rebuild(const ZoneSpec& spec, const StepRecord& rec) {
  ZoneSolution sol;
  sol.state = rec.state_before;
  sol.du = rec.du;
  sol.y_sp = rec.y_sp;
  sol.delta_y = rec.delta_y;
  sol.delta_u = rec.delta_u;
  sol.V_star = rec.V_star;
  sol.predicted = predict(spec.model(), rec.state_before, rec.du);
  return sol;
}

double max_abs_diff(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return kInf;
  if (a.size() == 0) return 0.0;
  return (a - b).lpNorm<Eigen::Infinity>();
}

double state_diff(const PlantState& a, const PlantState& b) {
  return std::max({max_abs_diff(a.xs, b.xs), max_abs_diff(a.xd, b.xd), max_abs_diff(a.u, b.u)});
}

double rel_scale(const PlantState& s) {
  double m = 0.0;
  for (const Vector* v : {&s.xs, &s.xd, &s.u}) {
    if (v->size() > 0) m = std::max(m, v->lpNorm<Eigen::Infinity>());
  }
  return 1.0 + m;
}

void add_check(AnalysisReport& r, std::string name, double value, double threshold, bool applicable) {
  CheckResult c;
  c.name = std::move(name);
  c.value = value;
  c.threshold = threshold;
  c.applicable = applicable;
  c.passed = !applicable || value <= threshold;
  r.checks.push_back(std::move(c));
}

// Checks shared by both controllers. `Sol` is the rebuilt per-step solution.
template <class Spec, class Sol, class Shift, class Stage>
void common_checks(AnalysisReport& rep, const Spec& spec, const ClosedLoopTrace& trace,
                   const std::vector<Sol>& sols, const AnalysisTolerances& tol, Shift shift,
                   Stage stage) {
  const auto& recs = trace.records;
  const std::size_t K = recs.size();
  const OpomModel& model = spec.model();

  double consistency = state_diff(recs[0].state_before, trace.initial_state) /
                       rel_scale(trace.initial_state);
  double mono = 0.0;
  double decrease = 0.0;
  double identity = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const PlantState after = plant_step(model, recs[k].state_before, recs[k].du.at(0));
    consistency = std::max(consistency, max_abs_diff(output(model, after), recs[k].y) /
                                            (1.0 + recs[k].y.lpNorm<Eigen::Infinity>()));
    const double V = recs[k].V_star;
    consistency = std::max(consistency, std::abs(V - sols[k].recomputed) / (1.0 + std::abs(V)));
    if (!std::isfinite(V) || V < 0.0) consistency = kInf;
    if (k + 1 == K) break;
    consistency = std::max(consistency, state_diff(recs[k + 1].state_before, after) / rel_scale(after));

    const double Vn = recs[k + 1].V_star;
    mono = std::max(mono, (Vn - V) / (1.0 + std::abs(V)));
    decrease = std::max(decrease, (Vn - (V - stage(sols[k].sol))) / (1.0 + std::abs(V)));
    try {
      const auto cand = shift(sols[k].sol, recs[k + 1].state_before);
      double err = cand.identity_error / (1.0 + std::abs(V));
      if (!cand.feasible) err = kInf;
      identity = std::max(identity, err);
    } catch (const Error&) {
      identity = kInf;
    }
  }
  rep.consistency_max_err = consistency;
  rep.monotone_max_violation = std::max(0.0, mono);
  rep.decrease_ineq_max_violation = std::max(0.0, decrease);
  rep.decrease_identity_max_err = identity;
  rep.monotone_ok = rep.monotone_max_violation <= tol.monotone;

  add_check(rep, "trace_consistency", consistency, tol.consistency, true);
  add_check(rep, "monotone", rep.monotone_max_violation, tol.monotone, true);
  add_check(rep, "decrease_inequality", rep.decrease_ineq_max_violation, tol.monotone, true);
  add_check(rep, "shifted_identity", identity, tol.identity, true);

  rep.V_first = recs.front().V_star;
  rep.V_final = recs.back().V_star;
  rep.converged = rep.V_final <= tol.converge;
  const auto& last = sols.back().sol;
  rep.xd_final_norm = last.predicted.xd[0].size() ? last.predicted.xd[0].norm() : 0.0;
}

template <class Sol>
struct Rebuilt {
  Sol sol;
  double recomputed = 0.0;
};

AnalysisReport analyze_setpoint(const SetpointSpec& spec, const ClosedLoopTrace& trace,
                                const AnalysisTolerances& tol) {
  AnalysisReport rep;
  rep.kind = ControllerKind::kSetpoint;
  rep.steps = static_cast<int>(trace.records.size());
  rep.assumptions_met = is_origin(trace.initial_state) && spec.guarantees_hold();

  std::vector<Rebuilt<SetpointSolution>> sols;
  for (const StepRecord& rec : trace.records) {
    Rebuilt<SetpointSolution> r{rebuild(spec, rec), 0.0};
    r.recomputed = cost_of(spec, rec.state_before, rec.du, rec.delta);
    rep.error_sup = std::max(rep.error_sup, r.sol.e0.norm());
    sols.push_back(std::move(r));
  }
  common_checks(
      rep, spec, trace, sols, tol,
      [&](const SetpointSolution& s, const PlantState& next) { return shifted_strategy(spec, s, next); },
      [&](const SetpointSolution& s) { return stage_decrease(spec, s); });

  rep.upper_bound = null_strategy_cost(spec, trace.initial_state);
  double worst = -kInf;
  for (const StepRecord& rec : trace.records) worst = std::max(worst, rec.V_star - rep.upper_bound);
  rep.upper_bound_ok = worst <= tol.bound;
  add_check(rep, "upper_bound", std::max(0.0, worst), tol.bound, true);

  const SetpointSolution& last = sols.back().sol;
  const KernelDecomposition& dec = spec.decomposition();
  Vector sum = Vector::Zero(spec.model().nu());
  for (const Vector& du : last.du) sum += du;
  rep.perp_component_final = (dec.Vperp.transpose() * sum).norm();
  const Vector& u0 = last.predicted.u[0];
  rep.projection_residual_final = (u0 - project_Ur(u0, spec.u_r(), dec)).norm();

  const bool ok = rep.assumptions_met;
  add_check(rep, "convergence", rep.V_final, tol.converge, ok);
  add_check(rep, "xd_limit", rep.xd_final_norm, tol.limit, ok);
  add_check(rep, "perp_limit", rep.perp_component_final, tol.limit, ok);
  add_check(rep, "projection_limit", rep.projection_residual_final, tol.limit, ok);
  return rep;
}

AnalysisReport analyze_zone(const ZoneSpec& spec, const ClosedLoopTrace& trace,
                            const AnalysisTolerances& tol) {
  AnalysisReport rep;
  rep.kind = ControllerKind::kZone;
  rep.steps = static_cast<int>(trace.records.size());
  rep.assumptions_met = is_origin(trace.initial_state) && spec.guarantees_hold();

  std::vector<Rebuilt<ZoneSolution>> sols;
  for (const StepRecord& rec : trace.records) {
    Rebuilt<ZoneSolution> r{rebuild(spec, rec), 0.0};
    r.recomputed = cost_of_zone(spec, rec.state_before, rec.du, rec.y_sp, rec.delta_y, rec.delta_u);
    const ZoneSolution& s = r.sol;
    Vector dev(spec.model().ny() + spec.model().nu());
    dev << s.predicted.y[0] - s.y_sp, s.predicted.u[0] - spec.u_des();
    rep.deviation_sup = std::max(rep.deviation_sup, dev.norm());
    sols.push_back(std::move(r));
  }
  common_checks(
      rep, spec, trace, sols, tol,
      [&](const ZoneSolution& s, const PlantState& next) { return shifted_strategy_zone(spec, s, next); },
      [&](const ZoneSolution& s) { return stage_decrease_zone(spec, s); });

  rep.upper_bound = target_strategy_cost(spec, trace.initial_state);
  double worst = -kInf;
  for (const StepRecord& rec : trace.records) worst = std::max(worst, rec.V_star - rep.upper_bound);
  rep.upper_bound_ok = worst <= tol.bound;
  add_check(rep, "upper_bound", std::max(0.0, worst), tol.bound, spec.target_admissible());

  const ZoneSolution& last = sols.back().sol;
  Vector sum = Vector::Zero(spec.model().nu());
  rep.du_energy_final = 0.0;
  for (const Vector& du : last.du) {
    sum += du;
    rep.du_energy_final += weighted_sq(du, spec.R());
  }
  rep.sum_du_final = sum.norm();
  rep.slack_limit_err = std::abs(rep.V_final - (weighted_sq(last.delta_y, spec.Sy()) +
                                                weighted_sq(last.delta_u, spec.Su())));
  rep.target_err_final = (last.predicted.u[0] - spec.u_des()).norm();
  rep.delta_y_final = last.delta_y.norm();
  rep.delta_u_final = last.delta_u.norm();

  const bool ok = rep.assumptions_met;
  const bool interior = spec.U().contains_in_interior(spec.u_des()) &&
                        spec.Y().contains_in_interior(spec.model().D0() * spec.u_des());
  add_check(rep, "convergence", rep.V_final, tol.converge, ok);
  add_check(rep, "xd_limit", rep.xd_final_norm, tol.limit, ok);
  add_check(rep, "sum_du_limit", rep.sum_du_final, tol.limit, ok);
  add_check(rep, "slack_limit", rep.slack_limit_err, tol.converge, ok);
  add_check(rep, "du_energy_limit", rep.du_energy_final, tol.converge, ok);
  add_check(rep, "delta_y_limit", rep.delta_y_final, tol.limit, ok);
  add_check(rep, "delta_u_limit", rep.delta_u_final, tol.limit, ok);
  add_check(rep, "target_limit", rep.target_err_final, tol.target, ok && interior);
  return rep;
}

}  // namespace

ControllerKind kind_of(const ControllerSpec& spec) {
  return std::holds_alternative<SetpointSpec>(spec) ? ControllerKind::kSetpoint : ControllerKind::kZone;
}

ClosedLoopTrace run_closed_loop(const ControllerSpec& spec, const PlantState& initial_state,
                                int steps, const QpSettings& settings) {
  if (steps < 1) throw Error(ErrorCode::kInvalidArgument, "steps must be at least 1");
  const OpomModel& model = model_of(spec);
  check_state(model, initial_state);
  ClosedLoopTrace trace{spec, initial_state, {}, std::nullopt};
  trace.records.reserve(steps);
  PlantState state = initial_state;
  for (int k = 0; k < steps; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    StepRecord rec;
    try {
      rec = std::visit([&](const auto& s) { return record_step(s, state, settings); }, spec);
    } catch (const Error& e) {
      trace.failure = "step " + std::to_string(k) + ": " + e.what();
      break;
    }
    rec.state_before = state;
    state = plant_step(model, state, rec.du.at(0));
    rec.y = output(model, state);
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    trace.records.push_back(std::move(rec));
  }
  return trace;
}

ClosedLoopTrace run_closed_loop(const ControllerSpec& spec, int steps, const QpSettings& settings) {
  return run_closed_loop(spec, PlantState::origin(model_of(spec)), steps, settings);
}

bool AnalysisReport::all_applicable_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

const CheckResult* AnalysisReport::find(const std::string& name) const {
  for (const CheckResult& c : checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

AnalysisReport analyze(const ClosedLoopTrace& trace, const AnalysisTolerances& tol) {
  if (trace.records.empty()) throw Error(ErrorCode::kInvalidArgument, "cannot analyze an empty trace");
  return std::visit(overloaded{
                        [&](const SetpointSpec& s) { return analyze_setpoint(s, trace, tol); },
                        [&](const ZoneSpec& s) { return analyze_zone(s, trace, tol); },
                    },
                    trace.spec);
}

std::vector<SweepRow> stability_sweep(const ControllerSpec& base, std::span<const double> scales,
                                      int steps, const QpSettings& settings) {
  std::vector<SweepRow> rows;
  for (const double s : scales) {
    if (!(s > 0.0 && s <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "sweep scales must lie in (0, 1]");
    const ControllerSpec scaled = std::visit(
        overloaded{
            [&](const SetpointSpec& sp) -> ControllerSpec { return sp.with_reference(s * sp.reference()); },
            [&](const ZoneSpec& zs) -> ControllerSpec { return zs.with_target(s * zs.u_des()); },
        },
        base);
    const ClosedLoopTrace trace = run_closed_loop(scaled, steps, settings);
    if (trace.failure) throw Error(ErrorCode::kSolverFailure, *trace.failure);
    const AnalysisReport rep = analyze(trace);
    SweepRow row;
    row.scale = s;
    row.sup_error = rep.kind == ControllerKind::kSetpoint ? rep.error_sup : rep.deviation_sup;
    row.gain = row.sup_error / s;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace ihmpc
