#include "condensed.hpp"

namespace ihmpc::detail {

CondensedPrediction condense(const OpomModel& model, const PlantState& state, int m, int n) {
  const int ny = model.ny();
  const int nu = model.nu();
  const int nd = model.nd();
  const Matrix& D0 = model.D0();
  const Matrix& F = model.F();
  const Matrix& Dd = model.Dd();
  const Matrix& Psi = model.Psi();

  // Fpow[j] = F^j for j = 0..m.
  std::vector<Matrix> Fpow(m + 1);
  Fpow[0] = Matrix::Identity(nd, nd);
  for (int j = 1; j <= m; ++j) Fpow[j] = F * Fpow[j - 1];

  CondensedPrediction cp;
  for (int j = 0; j < m; ++j) {
    Affine y{Matrix::Zero(ny, n), state.xs + Psi * (Fpow[j + 1] * state.xd)};
    Affine u{Matrix::Zero(nu, n), state.u};
    for (int i = 0; i <= j; ++i) {
      y.E.block(0, i * nu, ny, nu) = D0 + Psi * Fpow[j - i] * Dd;
      u.E.block(0, i * nu, nu, nu).setIdentity();
    }
    cp.y.push_back(std::move(y));
    cp.u.push_back(std::move(u));
  }
  cp.xd_last = {Matrix::Zero(nd, n), Fpow[m] * state.xd};
  cp.du_sum = {Matrix::Zero(nu, n), Vector::Zero(nu)};
  for (int i = 0; i < m; ++i) {
    cp.xd_last.E.block(0, i * nu, nd, nu) = Fpow[m - 1 - i] * Dd;
    cp.du_sum.E.block(0, i * nu, nu, nu).setIdentity();
  }
  return cp;
}

Matrix block_selector(int rows, int n, int offset) {
  Matrix E = Matrix::Zero(rows, n);
  E.block(0, offset, rows, rows).setIdentity();
  return E;
}

void append_move_boxes(const CondensedPrediction& cp, const Rectangle& dU, const Rectangle& U,
                       int m, int nu, int n, Matrix& A, Vector& lo, Vector& hi) {
  const auto start = A.rows();
  const auto extra = 2 * m * nu;
  A.conservativeResize(start + extra, n);
  lo.conservativeResize(start + extra);
  hi.conservativeResize(start + extra);
  auto row = start;
  for (int j = 0; j < m; ++j) {
    A.block(row, 0, nu, n) = block_selector(nu, n, j * nu);
    lo.segment(row, nu) = dU.lo();
    hi.segment(row, nu) = dU.hi();
    row += nu;
  }
  for (int j = 0; j < m; ++j) {
    A.block(row, 0, nu, n) = cp.u[j].E;
    lo.segment(row, nu) = U.lo() - cp.u[j].c;
    hi.segment(row, nu) = U.hi() - cp.u[j].c;
    row += nu;
  }
}

MoveSequence unpack_moves(const Vector& z, int m, int nu) {
  MoveSequence du;
  du.reserve(m);
  for (int j = 0; j < m; ++j) du.push_back(z.segment(j * nu, nu));
  return du;
}

}  // namespace ihmpc::detail
