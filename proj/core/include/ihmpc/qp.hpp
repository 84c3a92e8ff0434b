#pragma once

#include <limits>
#include <string_view>

#include "ihmpc/linalg.hpp"

namespace ihmpc {

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

/// Dense strictly convex QP
///
///   minimize   ½ zᵀPz + qᵀz + constant
///   subject to Aeq·z = beq
///              lo <= Aineq·z <= hi      (entries of lo/hi may be ±kUnbounded)
struct QuadProgram {
  Matrix P;
  Vector q;
  double constant = 0.0;
  Matrix Aeq;
  Vector beq;
  Matrix Aineq;
  Vector lo;
  Vector hi;

  int num_variables() const { return static_cast<int>(q.size()); }
  double objective(const Vector& z) const { return 0.5 * z.dot(P * z) + q.dot(z) + constant; }
};

/// Convenience constructor with no constraints; rows are appended afterwards.
QuadProgram make_qp(Matrix P, Vector q, double constant = 0.0);

enum class QpStatus { kOptimal, kInfeasible, kNumericalFailure };

std::string_view to_string(QpStatus status);

struct QpSolution {
  Vector z;
  Vector duals_eq;
  /// Signed multipliers of the two-sided rows: positive when the lower bound
  /// binds, negative when the upper bound binds.
  Vector duals_ineq;
  double objective = 0.0;
  QpStatus status = QpStatus::kNumericalFailure;
  double kkt_residual = 0.0;
  int iterations = 0;
};

struct QpSettings {
  /// KKT tolerance, scaled by the problem magnitude (see solve()).
  double tolerance = 1e-9;
  int max_iterations = 0;  // 0 selects 10·(n + rows) + 50
};

/// Throws Error(kDimension) when the blocks of qp are inconsistent.
void validate_dimensions(const QuadProgram& qp);

/// Dual active-set method (Goldfarb–Idnani). Returns the unique minimizer
/// with its multipliers. The result is optimal only if the KKT residual is
/// within tolerance·(1 + ‖q‖∞ + ‖P‖∞‖z‖∞). Bitwise deterministic.
QpSolution solve(const QuadProgram& qp, const QpSettings& settings = {});

/// Maximum of the stationarity, primal feasibility and complementarity
/// violations of solution against qp (also flags wrong-signed multipliers).
double kkt_residual(const QuadProgram& qp, const QpSolution& solution);

/// Solver-independent oracle for n <= 4: equality constraints are
/// eliminated through an SVD null-space basis, the reduced box is grid
/// searched for a starting point, and projected gradient descent (Dykstra
/// projection onto the constraint slabs) refines it.
Vector brute_force(const QuadProgram& qp, int resolution = 11);

}  // namespace ihmpc
