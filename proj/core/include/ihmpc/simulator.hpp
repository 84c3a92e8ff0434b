#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ihmpc/setpoint.hpp"
#include "ihmpc/zone.hpp"

namespace ihmpc {

enum class ControllerKind { kSetpoint, kZone };

using ControllerSpec = std::variant<SetpointSpec, ZoneSpec>;

ControllerKind kind_of(const ControllerSpec& spec);

/// One receding-horizon step: the state the problem was solved at, the full
/// optimal plan and slacks, and the plant output after the first move.
struct StepRecord {
  PlantState state_before;
  MoveSequence du;
  Vector delta;    // set-point slack
  Vector y_sp;     // zone only
  Vector delta_y;  // zone only
  Vector delta_u;  // zone only
  Vector y;
  double V_star = 0.0;
  double kkt_residual = 0.0;
  double wall_time_s = 0.0;
};

struct ClosedLoopTrace {
  ControllerSpec spec;
  PlantState initial_state;
  std::vector<StepRecord> records;
  /// Set when the solver failed; records holds the steps completed before.
  std::optional<std::string> failure;

  ControllerKind kind() const { return kind_of(spec); }
};

/// Solve, record, apply the first move, repeat. Deterministic apart from
/// wall_time_s.
ClosedLoopTrace run_closed_loop(const ControllerSpec& spec, const PlantState& initial_state,
                                int steps, const QpSettings& settings = {});
ClosedLoopTrace run_closed_loop(const ControllerSpec& spec, int steps,
                                const QpSettings& settings = {});

struct AnalysisTolerances {
  double monotone = 1e-8;    // relative slack on V*_{k+1} <= V*_k
  double identity = 1e-9;    // shifted-strategy identity, relative to 1 + V*_k
  double bound = 1e-9;       // absolute slack on the initial-strategy bound
  double converge = 1e-6;    // V*_K threshold
  double limit = 1e-5;       // limit quantities at the final step
  double target = 1e-4;      // ‖u_K − u_des‖ for interior targets
  double consistency = 1e-9; // recorded output vs replayed plant output
};

struct CheckResult {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool applicable = true;
  bool passed = true;
};

struct AnalysisReport {
  ControllerKind kind = ControllerKind::kSetpoint;
  int steps = 0;
  bool assumptions_met = false;

  bool monotone_ok = true;
  double monotone_max_violation = 0.0;
  double decrease_ineq_max_violation = 0.0;
  double decrease_identity_max_err = 0.0;
  double consistency_max_err = 0.0;

  double V_first = 0.0;
  double V_final = 0.0;
  double xd_final_norm = 0.0;

  // set-point
  double perp_component_final = 0.0;
  double projection_residual_final = 0.0;
  double error_sup = 0.0;  // sup_k ‖e*(0|k)‖

  // zone
  double sum_du_final = 0.0;
  double slack_limit_err = 0.0;
  double du_energy_final = 0.0;
  double target_err_final = 0.0;
  double delta_y_final = 0.0;
  double delta_u_final = 0.0;
  double deviation_sup = 0.0;  // sup_k ‖[y*(0|k) − y_sp*; u*(0|k) − u_des]‖

  double upper_bound = 0.0;
  bool upper_bound_ok = true;
  bool converged = false;

  std::vector<CheckResult> checks;

  bool all_applicable_passed() const;
  const CheckResult* find(const std::string& name) const;
};

/// Every field is computed from the trace (plus model evaluations, never a
/// QP solve). Convergence checks apply only when the run starts from the
/// origin steady state and the controller reports guarantees_hold().
AnalysisReport analyze(const ClosedLoopTrace& trace, const AnalysisTolerances& tol = {});

struct SweepRow {
  double scale = 0.0;
  double sup_error = 0.0;
  double gain = 0.0;
};

/// Closed loop with reference s·r (zone: target s·u_des) for each scale;
/// gain = sup_k error / s. Scales must lie in (0, 1].
std::vector<SweepRow> stability_sweep(const ControllerSpec& base, std::span<const double> scales,
                                      int steps, const QpSettings& settings = {});

}  // namespace ihmpc
