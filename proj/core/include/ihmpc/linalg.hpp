#pragma once

#include <Eigen/Dense>

#include <vector>

namespace ihmpc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Sequence of input moves; element j is the nu-vector Δu(j).
using MoveSequence = std::vector<Vector>;

/// Axis-aligned box {v : lo <= v <= hi}. Every box used by the controllers
/// must contain the origin, so construction rejects lo > 0 or hi < 0.
/// Infinite bounds are allowed.
class Rectangle {
 public:
  Rectangle() = default;
  Rectangle(Vector lo, Vector hi);

  static Rectangle symmetric(const Vector& half_width);
  static Rectangle unbounded(int dim);

  const Vector& lo() const { return lo_; }
  const Vector& hi() const { return hi_; }
  int dim() const { return static_cast<int>(lo_.size()); }
  bool is_finite() const;
  bool contains(const Vector& v, double tol = 0.0) const;
  bool contains_in_interior(const Vector& v) const;

 private:
  Vector lo_;
  Vector hi_;
};

/// ‖v‖²_W = vᵀ W v.
inline double weighted_sq(const Vector& v, const Matrix& W) {
  if (v.size() == 0) return 0.0;
  return v.dot(W * v);
}

bool all_finite(const Matrix& m);
bool is_symmetric(const Matrix& m, double rel_tol = 1e-10);
Matrix symmetrize(const Matrix& m);

/// Smallest eigenvalue of the symmetric part of m (+inf for an empty matrix).
double min_eigenvalue(const Matrix& m);
/// Largest eigenvalue of the symmetric part of m (0 for an empty matrix).
double max_eigenvalue(const Matrix& m);

bool is_positive_definite(const Matrix& m);

/// Throws Error(kDomain) unless m is square, symmetric and positive definite.
void require_symmetric_pd(const Matrix& m, const char* name);

double inf_norm(const Matrix& m);

}  // namespace ihmpc
