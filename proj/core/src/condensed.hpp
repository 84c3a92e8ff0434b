#pragma once

// Condensed prediction maps shared by the two controllers. Every predicted
// quantity is written as an affine function E·z + c of the decision vector,
// whose first m·nu entries are the stacked moves.

#include <vector>

#include "ihmpc/linalg.hpp"
#include "ihmpc/opom.hpp"

namespace ihmpc::detail {

struct Affine {
  Matrix E;
  Vector c;
};

struct CondensedPrediction {
  std::vector<Affine> y;  // y(j), j < m
  std::vector<Affine> u;  // u(j) = u_cur + Σ_{i<=j} Δu(i)
  Affine xd_last;         // xd(m−1)
  Affine du_sum;          // Σ_j Δu(j)
};

CondensedPrediction condense(const OpomModel& model, const PlantState& state, int m, int n);

// Accumulates ‖E·z + c‖²_W into ½zᵀPz + qᵀz + constant.
class QuadAccumulator {
 public:
  explicit QuadAccumulator(int n) : P_(Matrix::Zero(n, n)), q_(Vector::Zero(n)) {}

  void add(const Matrix& E, const Vector& c, const Matrix& W) {
    if (W.size() == 0) return;
    const Matrix WE = W * E;
    P_.noalias() += 2.0 * E.transpose() * WE;
    q_.noalias() += 2.0 * WE.transpose() * c;
    constant_ += c.dot(W * c);
  }
  void add(const Affine& a, const Matrix& W) { add(a.E, a.c, W); }

  Matrix P() const { return symmetrize(P_); }
  const Vector& q() const { return q_; }
  double constant() const { return constant_; }

 private:
  Matrix P_;
  Vector q_;
  double constant_ = 0.0;
};

// Selector for a contiguous block of the decision vector.
Matrix block_selector(int rows, int n, int offset);

// Rows for the move boxes and the cumulative input boxes, appended to an
// inequality block (lo <= A·z <= hi).
void append_move_boxes(const CondensedPrediction& cp, const Rectangle& dU, const Rectangle& U,
                       int m, int nu, int n, Matrix& A, Vector& lo, Vector& hi);

MoveSequence unpack_moves(const Vector& z, int m, int nu);

}  // namespace ihmpc::detail
