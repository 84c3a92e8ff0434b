#include "ihmpc/zone.hpp"

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

void check_args(const ZoneSpec& spec, const MoveSequence& du_seq, const Vector& y_sp,
                const Vector& delta_y, const Vector& delta_u) {
  const int ny = spec.model().ny();
  const int nu = spec.model().nu();
  if (static_cast<int>(du_seq.size()) != spec.horizon()) {
    throw Error(ErrorCode::kDimension, "move sequence length must equal the horizon");
  }
  for (const Vector& du : du_seq) {
    if (du.size() != nu) throw Error(ErrorCode::kDimension, "move has wrong length");
  }
  if (y_sp.size() != ny || delta_y.size() != ny || delta_u.size() != nu) {
    throw Error(ErrorCode::kDimension, "zone slack or set-point has wrong length");
  }
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

ZoneCandidate finish(const ZoneSpec& spec, const PlantState& state, ZoneCandidate c) {
  c.V_tilde = cost_of_zone(spec, state, c.du, c.y_sp, c.delta_y, c.delta_u);
  c.feasible = is_feasible_zone(spec, state, c.du, c.y_sp, c.delta_y, c.delta_u);
  return c;
}

}  // namespace

ZoneSpec::ZoneSpec(ZoneParams params, bool certificate_mode)
    : p_(std::move(params)), certificate_mode_(certificate_mode) {
  const int ny = p_.model.ny();
  const int nu = p_.model.nu();
  if (p_.m < 1) throw Error(ErrorCode::kInvalidArgument, "horizon must be at least 1");
  check_square(p_.Qy, ny, "Qy");
  check_square(p_.Qu, nu, "Qu");
  check_square(p_.R, nu, "R");
  check_square(p_.Sy, ny, "Sy");
  check_square(p_.Su, nu, "Su");
  require_symmetric_pd(p_.Qy, "Qy");
  require_symmetric_pd(p_.Qu, "Qu");
  require_symmetric_pd(p_.R, "R");
  require_symmetric_pd(p_.Sy, "Sy");
  require_symmetric_pd(p_.Su, "Su");
  if (p_.U.dim() != nu || p_.dU.dim() != nu) throw Error(ErrorCode::kDimension, "U and dU must have nu entries");
  if (p_.Y.dim() != ny) throw Error(ErrorCode::kDimension, "Y must have ny entries");
  if (p_.u_des.size() != nu) throw Error(ErrorCode::kDimension, "u_des must have nu entries");
  if (!p_.u_des.allFinite()) throw Error(ErrorCode::kDomain, "u_des must be finite");

  Qbar_ = terminal_weight(p_.model.F(), p_.model.Psi(), p_.Qy);
  H_ = matrix_H(p_.model.D0(), p_.model.Dd(), p_.model.Psi(), Qbar_, p_.Qy, p_.Qu, p_.R, p_.m);
  su_ok_ = check_Su(p_.Su, H_);
  if (certificate_mode_ && !su_ok_) {
    throw Error(ErrorCode::kCertificate, "Su - H - I is not positive definite");
  }
  target_ok_ = check_target_admissible(p_.model.D0(), p_.U, p_.Y, p_.u_des);
}

ZoneSpec ZoneSpec::with_target(const Vector& u_des) const {
  ZoneParams p = p_;
  p.u_des = u_des;
  return ZoneSpec(std::move(p), certificate_mode_);
}

QuadProgram assemble_zone(const ZoneSpec& spec, const PlantState& state) {
  const OpomModel& model = spec.model();
  check_state(model, state);
  const int ny = model.ny();
  const int nu = model.nu();
  const int m = spec.horizon();
  const int n = spec.num_decision_variables();
  const int ysp_at = m * nu;
  const int dy_at = ysp_at + ny;
  const int du_at = dy_at + ny;

  const detail::CondensedPrediction cp = detail::condense(model, state, m, n);
  const Matrix Sel_ysp = detail::block_selector(ny, n, ysp_at);
  const Matrix Sel_dy = detail::block_selector(ny, n, dy_at);
  const Matrix Sel_du = detail::block_selector(nu, n, du_at);

  detail::QuadAccumulator acc(n);
  for (int j = 0; j < m; ++j) {
    acc.add(cp.y[j].E - Sel_ysp - Sel_dy, cp.y[j].c, spec.Qy());
  }
  acc.add(cp.xd_last, spec.Qbar());
  for (int j = 0; j < m; ++j) {
    acc.add(cp.u[j].E - Sel_du, cp.u[j].c - spec.u_des(), spec.Qu());
  }
  for (int j = 0; j < m; ++j) acc.add(detail::block_selector(nu, n, j * nu), Vector::Zero(nu), spec.R());
  acc.add(Sel_dy, Vector::Zero(ny), spec.Sy());
  acc.add(Sel_du, Vector::Zero(nu), spec.Su());

  QuadProgram qp = make_qp(acc.P(), acc.q(), acc.constant());
  // xs + D0·ΣΔu − y_sp − δ_y = 0 and u + ΣΔu − u_des − δ_u = 0
  qp.Aeq = Matrix::Zero(ny + nu, n);
  qp.beq = Vector::Zero(ny + nu);
  qp.Aeq.topRows(ny) = model.D0() * cp.du_sum.E - Sel_ysp - Sel_dy;
  qp.beq.head(ny) = -state.xs;
  qp.Aeq.bottomRows(nu) = cp.du_sum.E - Sel_du;
  qp.beq.tail(nu) = spec.u_des() - state.u;

  detail::append_move_boxes(cp, spec.dU(), spec.U(), m, nu, n, qp.Aineq, qp.lo, qp.hi);
  const auto row = qp.Aineq.rows();
  qp.Aineq.conservativeResize(row + ny, n);
  qp.lo.conservativeResize(row + ny);
  qp.hi.conservativeResize(row + ny);
  qp.Aineq.bottomRows(ny) = Sel_ysp;
  qp.lo.tail(ny) = spec.Y().lo();
  qp.hi.tail(ny) = spec.Y().hi();
  return qp;
}

ZoneSolution solve_step_zone(const ZoneSpec& spec, const PlantState& state,
                             const QpSettings& settings) {
  const QuadProgram qp = assemble_zone(spec, state);
  const QpSolution qs = solve(qp, settings);
  if (qs.status != QpStatus::kOptimal) {
    throw Error(ErrorCode::kSolverFailure, "zone QP returned " + std::string(to_string(qs.status)));
  }
  const int m = spec.horizon();
  const int nu = spec.model().nu();
  const int ny = spec.model().ny();
  ZoneSolution sol;
  sol.state = state;
  sol.du = detail::unpack_moves(qs.z, m, nu);
  sol.y_sp = qs.z.segment(m * nu, ny);
  sol.delta_y = qs.z.segment(m * nu + ny, ny);
  sol.delta_u = qs.z.segment(m * nu + 2 * ny, nu);
  sol.qp_objective = qs.objective;
  sol.kkt_residual = qs.kkt_residual;
  sol.V_star = cost_of_zone(spec, state, sol.du, sol.y_sp, sol.delta_y, sol.delta_u);
  sol.predicted = predict(spec.model(), state, sol.du);
  return sol;
}

double cost_of_zone(const ZoneSpec& spec, const PlantState& state, const MoveSequence& du_seq,
                    const Vector& y_sp, const Vector& delta_y, const Vector& delta_u) {
  check_args(spec, du_seq, y_sp, delta_y, delta_u);
  const Prediction pr = predict(spec.model(), state, du_seq);
  const int m = spec.horizon();
  double V = 0.0;
  for (int j = 0; j < m; ++j) {
    V += weighted_sq(pr.y[j] - y_sp - delta_y, spec.Qy());
    V += weighted_sq(pr.u[j] - spec.u_des() - delta_u, spec.Qu());
    V += weighted_sq(du_seq[j], spec.R());
  }
  V += weighted_sq(pr.xd[m - 1], spec.Qbar());
  V += weighted_sq(delta_y, spec.Sy());
  V += weighted_sq(delta_u, spec.Su());
  return V;
}

bool is_feasible_zone(const ZoneSpec& spec, const PlantState& state, const MoveSequence& du_seq,
                      const Vector& y_sp, const Vector& delta_y, const Vector& delta_u,
                      double box_tol, double eq_tol) {
  check_args(spec, du_seq, y_sp, delta_y, delta_u);
  const Prediction pr = predict(spec.model(), state, du_seq);
  for (std::size_t j = 0; j < du_seq.size(); ++j) {
    if (!spec.dU().contains(du_seq[j], box_tol)) return false;
    if (!spec.U().contains(pr.u[j], box_tol)) return false;
  }
  if (!spec.Y().contains(y_sp, box_tol)) return false;
  const double scale = 1.0 + y_sp.norm() + spec.u_des().norm();
  if ((pr.xs.back() - y_sp - delta_y).norm() > eq_tol * scale) return false;
  return (pr.u.back() - spec.u_des() - delta_u).norm() <= eq_tol * scale;
}

ShiftedZoneCandidate shifted_strategy_zone(const ZoneSpec& spec, const ZoneSolution& prev,
                                           const PlantState& state_after_move) {
  const PlantState expected = plant_step(spec.model(), prev.state, prev.du.at(0));
  if (!states_match(state_after_move, expected)) {
    throw Error(ErrorCode::kStateMismatch, "state is not the previous state advanced by the first move");
  }
  ZoneCandidate base;
  base.du.assign(prev.du.begin() + 1, prev.du.end());
  base.du.push_back(Vector::Zero(spec.model().nu()));
  base.y_sp = prev.y_sp;
  base.delta_y = prev.delta_y;
  base.delta_u = prev.delta_u;
  ShiftedZoneCandidate c;
  static_cast<ZoneCandidate&>(c) = finish(spec, state_after_move, std::move(base));
  c.identity_error = std::abs(c.V_tilde - (prev.V_star - stage_decrease_zone(spec, prev)));
  return c;
}

ConsolidatedZoneCandidate consolidated_strategy_zone(const ZoneSpec& spec,
                                                     const PlantState& prev_state,
                                                     const ZoneSolution& prev) {
  const OpomModel& model = spec.model();
  check_state(model, prev_state);
  Vector total = Vector::Zero(model.nu());
  for (const Vector& du : prev.du) total += du;
  if (!spec.dU().contains(total, 1e-12)) {
    throw Error(ErrorCode::kNotApplicable, "consolidated move lies outside dU");
  }
  ZoneCandidate base;
  base.du.assign(prev.du.size(), Vector::Zero(model.nu()));
  base.du[0] = total;
  base.y_sp = prev.y_sp;
  base.delta_y = prev.delta_y;
  base.delta_u = prev.delta_u;
  ConsolidatedZoneCandidate c;
  static_cast<ZoneCandidate&>(c) = finish(spec, prev_state, std::move(base));

  double closed = weighted_sq(total, spec.R()) + weighted_sq(prev.delta_y, spec.Sy()) +
                  weighted_sq(prev.delta_u, spec.Su());
  if (model.nd() > 0) {
    const Matrix G = gram_G(model.F(), model.Psi(), spec.Qy(), spec.Qbar(), spec.horizon());
    closed += weighted_sq(model.F() * prev_state.xd + model.Dd() * total, G);
  }
  c.V_closed_form = closed;
  return c;
}

ZoneCandidate alpha_strategy_zone(const ZoneSpec& spec, const PlantState& state,
                                  const ZoneSolution& sol, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::kInvalidArgument, "alpha must lie in (0, 1)");
  const int m = spec.horizon();
  ZoneCandidate c;
  c.du = sol.du;
  c.du.at(m - 1) -= (1.0 - alpha) * sol.delta_u;
  c.y_sp = alpha * sol.y_sp + (1.0 - alpha) * (spec.model().D0() * spec.u_des());
  c.delta_y = alpha * sol.delta_y;
  c.delta_u = alpha * sol.delta_u;
  c = finish(spec, state, std::move(c));
  if (!c.feasible) throw Error(ErrorCode::kInfeasibleCandidate, "contracted plan violates a constraint");
  return c;
}

double stage_decrease_zone(const ZoneSpec& spec, const ZoneSolution& sol) {
  const Vector& y0 = sol.predicted.y.at(0);
  const Vector& u0 = sol.predicted.u.at(0);
  return weighted_sq(y0 - sol.y_sp - sol.delta_y, spec.Qy()) +
         weighted_sq(u0 - spec.u_des() - sol.delta_u, spec.Qu()) +
         weighted_sq(sol.du.at(0), spec.R());
}

double target_strategy_cost(const ZoneSpec& spec, const PlantState& state) {
  check_state(spec.model(), state);
  const Vector y_sp = spec.model().D0() * spec.u_des();
  const MoveSequence zero(spec.horizon(), Vector::Zero(spec.model().nu()));
  return cost_of_zone(spec, state, zero, y_sp, state.xs - y_sp, state.u - spec.u_des());
}

}  // namespace ihmpc
