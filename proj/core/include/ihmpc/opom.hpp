#pragma once

#include <complex>
#include <vector>

#include "ihmpc/linalg.hpp"

namespace ihmpc {

/// Output prediction-oriented model in incremental input form:
///
///   xs(k+1) = xs(k) + D0·Δu(k)
///   xd(k+1) = F·xd(k) + Dd·Δu(k)
///   y(k)    = xs(k) + Ψ·xd(k)
///
/// All matrices are real; complex pole pairs are realified by
/// build_from_modes(). Construction enforces ρ(F) < 1 and consistent
/// dimensions. Immutable once built.
class OpomModel {
 public:
  OpomModel(Matrix D0, Matrix F, Matrix Dd, Matrix Psi);

  /// Purely static system (nd = 0).
  static OpomModel static_gain(Matrix D0);

  int ny() const { return static_cast<int>(D0_.rows()); }
  int nu() const { return static_cast<int>(D0_.cols()); }
  int nd() const { return static_cast<int>(F_.rows()); }

  const Matrix& D0() const { return D0_; }
  const Matrix& F() const { return F_; }
  const Matrix& Dd() const { return Dd_; }
  const Matrix& Psi() const { return Psi_; }

  double spectral_radius() const { return rho_; }

 private:
  Matrix D0_;
  Matrix F_;
  Matrix Dd_;
  Matrix Psi_;
  double rho_ = 0.0;
};

struct PlantState {
  Vector xs;
  Vector xd;
  Vector u;

  /// Steady state at the origin: xs = 0, xd = 0, u = 0.
  static PlantState origin(const OpomModel& model);

  bool operator==(const PlantState& other) const = default;
};

bool is_origin(const PlantState& state);

/// One first-order response term. A real pole contributes a scalar state;
/// a complex pole stands for the conjugate pair and contributes a 2×2
/// rotation-scaling block.
struct Mode {
  std::complex<double> pole;
  std::complex<double> residue{1.0, 0.0};
  int output_index = 0;
  int input_index = 0;
};

OpomModel build_from_modes(const Matrix& D0, const std::vector<Mode>& modes);

/// max |λ| over the eigenvalues of a square matrix (0 for an empty one).
double spectral_radius(const Matrix& M);

PlantState plant_step(const OpomModel& model, const PlantState& state, const Vector& du);

Vector output(const OpomModel& model, const PlantState& state);

/// Open-loop prediction over a move sequence. Index j already includes
/// moves 0..j, so entry 0 is the state right after the first move.
struct Prediction {
  std::vector<Vector> xs;
  std::vector<Vector> xd;
  std::vector<Vector> y;
  std::vector<Vector> u;
};

Prediction predict(const OpomModel& model, const PlantState& state, const MoveSequence& du_seq);

/// Throws Error(kDimension) unless the state matches the model.
void check_state(const OpomModel& model, const PlantState& state);

}  // namespace ihmpc
