#pragma once

#include "ihmpc/certificates.hpp"
#include "ihmpc/opom.hpp"
#include "ihmpc/qp.hpp"

namespace ihmpc {

struct ZoneParams {
  OpomModel model;
  int m = 1;
  Matrix Qy;
  Matrix Qu;
  Matrix R;
  Matrix Sy;
  Matrix Su;
  Rectangle U;
  Rectangle dU;
  Rectangle Y;
  Vector u_des;
};

/// Validated configuration of the zone-control MPC with input targets.
///
/// With certificate_mode on, construction computes H and throws
/// Error(kCertificate) unless Su − H − I is positive definite. With it off
/// any positive definite Su is accepted and guarantees_hold() reflects the
/// outcome of the same check.
class ZoneSpec {
 public:
  explicit ZoneSpec(ZoneParams params, bool certificate_mode = true);

  const OpomModel& model() const { return p_.model; }
  int horizon() const { return p_.m; }
  const Matrix& Qy() const { return p_.Qy; }
  const Matrix& Qu() const { return p_.Qu; }
  const Matrix& R() const { return p_.R; }
  const Matrix& Sy() const { return p_.Sy; }
  const Matrix& Su() const { return p_.Su; }
  const Rectangle& U() const { return p_.U; }
  const Rectangle& dU() const { return p_.dU; }
  const Rectangle& Y() const { return p_.Y; }
  const Vector& u_des() const { return p_.u_des; }
  const ZoneParams& params() const { return p_; }
  bool certificate_mode() const { return certificate_mode_; }

  const Matrix& Qbar() const { return Qbar_; }
  const Matrix& H() const { return H_; }
  bool su_certified() const { return su_ok_; }
  bool target_admissible() const { return target_ok_; }
  bool guarantees_hold() const { return su_ok_ && target_ok_; }

  int num_decision_variables() const {
    return p_.m * p_.model.nu() + 2 * p_.model.ny() + p_.model.nu();
  }

  /// Same weights and boxes with a different input target.
  ZoneSpec with_target(const Vector& u_des) const;

 private:
  ZoneParams p_;
  bool certificate_mode_ = true;
  Matrix Qbar_;
  Matrix H_;
  bool su_ok_ = false;
  bool target_ok_ = false;
};

struct ZoneSolution {
  PlantState state;
  MoveSequence du;
  Vector y_sp;
  Vector delta_y;
  Vector delta_u;
  double V_star = 0.0;
  double qp_objective = 0.0;
  double kkt_residual = 0.0;
  Prediction predicted;
};

/// Decision vector z = [Δu(0); …; Δu(m−1); y_sp; δ_y; δ_u].
QuadProgram assemble_zone(const ZoneSpec& spec, const PlantState& state);

ZoneSolution solve_step_zone(const ZoneSpec& spec, const PlantState& state,
                             const QpSettings& settings = {});

double cost_of_zone(const ZoneSpec& spec, const PlantState& state, const MoveSequence& du_seq,
                    const Vector& y_sp, const Vector& delta_y, const Vector& delta_u);

bool is_feasible_zone(const ZoneSpec& spec, const PlantState& state, const MoveSequence& du_seq,
                      const Vector& y_sp, const Vector& delta_y, const Vector& delta_u,
                      double box_tol = 1e-9, double eq_tol = 1e-8);

struct ZoneCandidate {
  MoveSequence du;
  Vector y_sp;
  Vector delta_y;
  Vector delta_u;
  double V_tilde = 0.0;
  bool feasible = false;
};

struct ShiftedZoneCandidate : ZoneCandidate {
  /// |Ṽ − (V* − ‖y*(0)−y_sp*−δ_y*‖²_Qy − ‖u*(0)−u_des−δ_u*‖²_Qu − ‖Δu*(0)‖²_R)|
  double identity_error = 0.0;
};

/// Shift the plan, append a zero move, keep y_sp*, δ_y*, δ_u*.
ShiftedZoneCandidate shifted_strategy_zone(const ZoneSpec& spec, const ZoneSolution& prev,
                                           const PlantState& state_after_move);

struct ConsolidatedZoneCandidate : ZoneCandidate {
  /// ‖F·xd + Dd·ΣΔu*‖²_G + ‖ΣΔu*‖²_R + ‖δ_y*‖²_Sy + ‖δ_u*‖²_Su
  double V_closed_form = 0.0;
};

/// All moves of prev collapsed into the first one. Throws
/// Error(kNotApplicable) when ΣΔu* lies outside ΔU.
ConsolidatedZoneCandidate consolidated_strategy_zone(const ZoneSpec& spec,
                                                     const PlantState& prev_state,
                                                     const ZoneSolution& prev);

/// Last move reduced by (1−α)δ_u*, y_sp pulled towards D0·u_des and slacks
/// scaled by α. Throws Error(kInvalidArgument) for α outside (0, 1) and
/// Error(kInfeasibleCandidate) when the contracted plan violates a constraint.
ZoneCandidate alpha_strategy_zone(const ZoneSpec& spec, const PlantState& state,
                                  const ZoneSolution& sol, double alpha);

/// ‖y*(0)−y_sp*−δ_y*‖²_Qy + ‖u*(0)−u_des−δ_u*‖²_Qu + ‖Δu*(0)‖²_R.
double stage_decrease_zone(const ZoneSpec& spec, const ZoneSolution& sol);

/// Cost of the zero-move plan with y_sp = D0·u_des, δ_y = xs − D0·u_des,
/// δ_u = u − u_des (the k = 1 strategy when started from the origin).
double target_strategy_cost(const ZoneSpec& spec, const PlantState& state);

}  // namespace ihmpc
