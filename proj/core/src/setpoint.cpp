#include "ihmpc/setpoint.hpp"

#include <cmath>
#include <string>

#include "condensed.hpp"
#include "ihmpc/error.hpp"

namespace ihmpc {

namespace {

void check_square(const Matrix& m, int n, const char* name) {
  if (m.rows() != n || m.cols() != n) {
    throw Error(ErrorCode::kDimension, std::string(name) + " must be " + std::to_string(n) + "x" +
                                           std::to_string(n));
  }
}

void check_moves(const SetpointSpec& spec, const MoveSequence& du_seq, const Vector& delta) {
  if (static_cast<int>(du_seq.size()) != spec.horizon()) {
    throw Error(ErrorCode::kDimension, "move sequence length must equal the horizon");
  }
  for (const Vector& du : du_seq) {
    if (du.size() != spec.model().nu()) throw Error(ErrorCode::kDimension, "move has wrong length");
  }
  if (delta.size() != spec.model().ny()) throw Error(ErrorCode::kDimension, "delta has wrong length");
}

bool states_match(const PlantState& a, const PlantState& b) {
  if (a.xs.size() != b.xs.size() || a.xd.size() != b.xd.size() || a.u.size() != b.u.size()) {
    return false;
  }
  auto close = [](const Vector& x, const Vector& y) {
    if (x.size() == 0) return true;
    return (x - y).lpNorm<Eigen::Infinity>() <= 1e-12 * (1.0 + y.lpNorm<Eigen::Infinity>());
  };
  return close(a.xs, b.xs) && close(a.xd, b.xd) && close(a.u, b.u);
}

}  // namespace

SetpointSpec::SetpointSpec(SetpointParams params, bool slack_certified, double rank_tol)
    : p_(std::move(params)), slack_certified_(slack_certified), rank_tol_(rank_tol) {
  const int ny = p_.model.ny();
  const int nu = p_.model.nu();
  if (p_.m < 1) throw Error(ErrorCode::kInvalidArgument, "horizon must be at least 1");
  check_square(p_.Q, ny, "Q");
  check_square(p_.R, nu, "R");
  check_square(p_.S, ny, "S");
  require_symmetric_pd(p_.Q, "Q");
  require_symmetric_pd(p_.R, "R");
  require_symmetric_pd(p_.S, "S");
  if (p_.U.dim() != nu || p_.dU.dim() != nu) throw Error(ErrorCode::kDimension, "U and dU must have nu entries");
  if (p_.r.size() != ny) throw Error(ErrorCode::kDimension, "reference must have ny entries");
  if (!p_.r.allFinite()) throw Error(ErrorCode::kDomain, "reference must be finite");

  Qbar_ = terminal_weight(p_.model.F(), p_.model.Psi(), p_.Q);
  decomp_ = kernel_decomposition(p_.model.D0(), rank_tol_);
  const ReferenceAdmissibility adm = check_reference_admissible(p_.model.D0(), p_.U, p_.r);
  admissible_ = adm.admissible;
  u_r_ = adm.u_r;
}

SetpointSpec SetpointSpec::with_reference(const Vector& r) const {
  SetpointParams p = p_;
  p.r = r;
  return SetpointSpec(std::move(p), slack_certified_, rank_tol_);
}

QuadProgram assemble(const SetpointSpec& spec, const PlantState& state) {
  const OpomModel& model = spec.model();
  check_state(model, state);
  const int ny = model.ny();
  const int nu = model.nu();
  const int m = spec.horizon();
  const int n = spec.num_decision_variables();
  const int delta_at = m * nu;

  const detail::CondensedPrediction cp = detail::condense(model, state, m, n);
  const Matrix Sel_delta = detail::block_selector(ny, n, delta_at);

  detail::QuadAccumulator acc(n);
  for (int j = 0; j < m; ++j) {
    acc.add(cp.y[j].E - Sel_delta, cp.y[j].c - spec.reference(), spec.Q());
  }
  acc.add(cp.xd_last, spec.Qbar());
  for (int j = 0; j < m; ++j) acc.add(detail::block_selector(nu, n, j * nu), Vector::Zero(nu), spec.R());
  acc.add(Sel_delta, Vector::Zero(ny), spec.S());

  QuadProgram qp = make_qp(acc.P(), acc.q(), acc.constant());
  // D0·ΣΔu − δ = r − xs
  qp.Aeq = model.D0() * cp.du_sum.E - Sel_delta;
  qp.beq = spec.reference() - state.xs;
  detail::append_move_boxes(cp, spec.dU(), spec.U(), m, nu, n, qp.Aineq, qp.lo, qp.hi);
  return qp;
}

SetpointSolution solve_step(const SetpointSpec& spec, const PlantState& state,
                            const QpSettings& settings) {
  const QuadProgram qp = assemble(spec, state);
  const QpSolution qs = solve(qp, settings);
  if (qs.status != QpStatus::kOptimal) {
    throw Error(ErrorCode::kSolverFailure,
                "set-point QP returned " + std::string(to_string(qs.status)));
  }
  const int m = spec.horizon();
  const int nu = spec.model().nu();
  SetpointSolution sol;
  sol.state = state;
  sol.du = detail::unpack_moves(qs.z, m, nu);
  sol.delta = qs.z.segment(m * nu, spec.model().ny());
  sol.qp_objective = qs.objective;
  sol.kkt_residual = qs.kkt_residual;
  sol.V_star = cost_of(spec, state, sol.du, sol.delta);
  sol.predicted = predict(spec.model(), state, sol.du);
  sol.e0 = sol.predicted.y[0] - spec.reference();
  return sol;
}

double cost_of(const SetpointSpec& spec, const PlantState& state, const MoveSequence& du_seq,
               const Vector& delta) {
  check_moves(spec, du_seq, delta);
  const Prediction pr = predict(spec.model(), state, du_seq);
  const int m = spec.horizon();
  double V = 0.0;
  for (int j = 0; j < m; ++j) {
    V += weighted_sq(pr.y[j] - spec.reference() - delta, spec.Q());
    V += weighted_sq(du_seq[j], spec.R());
  }
  V += weighted_sq(pr.xd[m - 1], spec.Qbar());
  V += weighted_sq(delta, spec.S());
  return V;
}

bool is_feasible(const SetpointSpec& spec, const PlantState& state, const MoveSequence& du_seq,
                 const Vector& delta, double box_tol, double eq_tol) {
  check_moves(spec, du_seq, delta);
  const Prediction pr = predict(spec.model(), state, du_seq);
  for (std::size_t j = 0; j < du_seq.size(); ++j) {
    if (!spec.dU().contains(du_seq[j], box_tol)) return false;
    if (!spec.U().contains(pr.u[j], box_tol)) return false;
  }
  const Vector terminal = pr.xs.back() - delta - spec.reference();
  return terminal.norm() <= eq_tol * (1.0 + spec.reference().norm());
}

SetpointCandidate shifted_strategy(const SetpointSpec& spec, const SetpointSolution& prev,
                                   const PlantState& state_after_move) {
  const PlantState expected = plant_step(spec.model(), prev.state, prev.du.at(0));
  if (!states_match(state_after_move, expected)) {
    throw Error(ErrorCode::kStateMismatch, "state is not the previous state advanced by the first move");
  }
  SetpointCandidate c;
  c.du.assign(prev.du.begin() + 1, prev.du.end());
  c.du.push_back(Vector::Zero(spec.model().nu()));
  c.delta = prev.delta;
  c.V_tilde = cost_of(spec, state_after_move, c.du, c.delta);
  c.feasible = is_feasible(spec, state_after_move, c.du, c.delta);
  c.identity_error = std::abs(c.V_tilde - (prev.V_star - stage_decrease(spec, prev)));
  return c;
}

double null_strategy_cost(const SetpointSpec& spec, const PlantState& state) {
  const OpomModel& model = spec.model();
  check_state(model, state);
  double V = weighted_sq(state.xs - spec.reference(), spec.S());
  if (model.nd() > 0) {
    const Matrix G = gram_G(model.F(), model.Psi(), spec.Q(), spec.Qbar(), spec.horizon());
    V += weighted_sq(model.F() * state.xd, G);
  }
  return V;
}

double stage_decrease(const SetpointSpec& spec, const SetpointSolution& sol) {
  return weighted_sq(sol.e0 - sol.delta, spec.Q()) + weighted_sq(sol.du.at(0), spec.R());
}

}  // namespace ihmpc
