#pragma once

#include "ihmpc/certificates.hpp"
#include "ihmpc/opom.hpp"
#include "ihmpc/qp.hpp"

namespace ihmpc {

struct SetpointParams {
  OpomModel model;
  int m = 1;
  Matrix Q;
  Matrix R;
  Matrix S;
  Rectangle U;
  Rectangle dU;
  Vector r;
};

/// Validated configuration of the extended infinite-horizon set-point MPC.
///
/// Construction checks dimensions and that Q, R, S are symmetric positive
/// definite, solves for the terminal weight Q̄, and records whether the
/// reference is admissible (r = D0·u_r with u_r ∈ U). An inadmissible
/// reference does not throw; guarantees_hold() reports false instead.
class SetpointSpec {
 public:
  /// slack_certified marks S as produced by the certificate pipeline
  /// (S = β·Ŝ with β > 6·C3).
  explicit SetpointSpec(SetpointParams params, bool slack_certified = false,
                        double rank_tol = kDefaultRankTolerance);

  const OpomModel& model() const { return p_.model; }
  int horizon() const { return p_.m; }
  const Matrix& Q() const { return p_.Q; }
  const Matrix& R() const { return p_.R; }
  const Matrix& S() const { return p_.S; }
  const Rectangle& U() const { return p_.U; }
  const Rectangle& dU() const { return p_.dU; }
  const Vector& reference() const { return p_.r; }
  const SetpointParams& params() const { return p_; }

  const Matrix& Qbar() const { return Qbar_; }
  const KernelDecomposition& decomposition() const { return decomp_; }
  bool reference_admissible() const { return admissible_; }
  const Vector& u_r() const { return u_r_; }
  bool slack_certified() const { return slack_certified_; }
  bool guarantees_hold() const { return admissible_ && slack_certified_; }
  double rank_tol() const { return rank_tol_; }

  int num_decision_variables() const { return p_.m * p_.model.nu() + p_.model.ny(); }

  /// Same weights and boxes with a different reference.
  SetpointSpec with_reference(const Vector& r) const;

 private:
  SetpointParams p_;
  Matrix Qbar_;
  KernelDecomposition decomp_;
  bool admissible_ = false;
  Vector u_r_;
  bool slack_certified_ = false;
  double rank_tol_ = kDefaultRankTolerance;
};

struct SetpointSolution {
  PlantState state;  // state the problem was solved at
  MoveSequence du;
  Vector delta;
  double V_star = 0.0;
  double qp_objective = 0.0;
  double kkt_residual = 0.0;
  Prediction predicted;
  Vector e0;  // e*(0|k) = y*(0|k) − r
};

/// Decision vector z = [Δu(0); …; Δu(m−1); δ]. The Hessian does not depend
/// on the state; q, beq and the cumulative input bounds do.
QuadProgram assemble(const SetpointSpec& spec, const PlantState& state);

/// Throws Error(kSolverFailure) when the QP is not solved to optimality.
SetpointSolution solve_step(const SetpointSpec& spec, const PlantState& state,
                            const QpSettings& settings = {});

/// Direct evaluation of V through predict(); does not check the boxes or
/// the terminal equality.
double cost_of(const SetpointSpec& spec, const PlantState& state, const MoveSequence& du_seq,
               const Vector& delta);

/// Boxes within box_tol and terminal equality xs(m−1) − δ − r = 0 within eq_tol.
bool is_feasible(const SetpointSpec& spec, const PlantState& state, const MoveSequence& du_seq,
                 const Vector& delta, double box_tol = 1e-9, double eq_tol = 1e-8);

struct SetpointCandidate {
  MoveSequence du;
  Vector delta;
  double V_tilde = 0.0;
  bool feasible = false;
  /// |Ṽ − (V* − ‖e*(0)−δ*‖²_Q − ‖Δu*(0)‖²_R)|
  double identity_error = 0.0;
};

/// Shift the previous plan by one move, append a zero move, keep δ*.
/// Throws Error(kStateMismatch) unless state_after_move is the previous state
/// advanced by prev.du[0].
SetpointCandidate shifted_strategy(const SetpointSpec& spec, const SetpointSolution& prev,
                                   const PlantState& state_after_move);

/// Cost of the all-zero move plan with δ = xs − r: ‖F·xd‖²_G + ‖xs − r‖²_S.
double null_strategy_cost(const SetpointSpec& spec, const PlantState& state);

/// ‖e*(0|k) − δ*‖²_Q + ‖Δu*(0|k)‖²_R, the decrease guaranteed per step.
double stage_decrease(const SetpointSpec& spec, const SetpointSolution& sol);

}  // namespace ihmpc
