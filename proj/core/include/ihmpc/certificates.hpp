#pragma once

#include <cstdint>
#include <optional>

#include "ihmpc/linalg.hpp"
#include "ihmpc/opom.hpp"

namespace ihmpc {

inline constexpr double kDefaultRankTolerance = 1e-10;

/// Orthonormal bases of the four fundamental subspaces of D0 from its SVD.
///
///   Vperp : (ker D0)^⊥   nu × k        Vker : ker D0          nu × (nu−k)
///   W1    : Im D0        ny × k        W2   : (Im D0)^⊥       ny × (ny−k)
struct KernelDecomposition {
  int rank = 0;
  Matrix Vperp;
  Matrix Vker;
  Matrix W1;
  Matrix W2;

  /// Component of v in (ker D0)^⊥, in ambient coordinates.
  Vector perp(const Vector& v) const { return Vperp * (Vperp.transpose() * v); }
};

/// Singular values σ_i > rank_tol·σ_max count towards the rank.
KernelDecomposition kernel_decomposition(const Matrix& D0, double rank_tol = kDefaultRankTolerance);

/// Terminal weight Q̄ = Σ_{j>=1} (F^j)ᵀΨᵀQΨF^j, i.e. the solution of
/// Q̄ − FᵀQ̄F = FᵀΨᵀQΨF, by Kronecker vectorization.
Matrix terminal_weight(const Matrix& F, const Matrix& Psi, const Matrix& Q);

/// G = Σ_{j<m} (F^j)ᵀΨᵀQΨF^j + (F^{m−1})ᵀQ̄F^{m−1}; equals ΨᵀQΨ + Q̄ for any m.
Matrix gram_G(const Matrix& F, const Matrix& Psi, const Matrix& Q, const Matrix& Qbar, int m);

/// Z = R + DdᵀG·Dd.
Matrix matrix_Z(const Matrix& R, const Matrix& Dd, const Matrix& G);

/// Slack-weight shape Ŝ, positive definite on R^ny, with
/// ‖D0 v‖²_Ŝ = ‖v‖² for every v in (ker D0)^⊥.
Matrix s_hat(const Matrix& D0, const KernelDecomposition& decomp);

/// Orthogonal projection onto the affine subspace u_r + ker D0.
Vector project_Ur(const Vector& u, const Vector& u_r, const KernelDecomposition& decomp);

struct PhiOptions {
  int n_samples = 100000;
  double safety = 0.9;
  std::uint64_t seed = 1;
};

/// Lower estimate of inf |cos θ_x| where θ_x is the angle between
/// P_r x − x and Π_r x − x (Π_r: nearest point of U ∩ U_r). Exactly 1 when
/// D0 is injective; Monte Carlo over U otherwise.
double phi_lower_bound(const Matrix& D0, const Rectangle& U, const Vector& u_r,
                       const KernelDecomposition& decomp, const PhiOptions& options = {});

/// Γ_M = sqrt(ρ(M)) for symmetric positive semidefinite M.
double gamma(const Matrix& M);

/// C3 = 2φ^{-2}·max(Γ_Z², 2·Γ_Q̄·Γ_{Z−R}).
double c3(const Matrix& Z, const Matrix& Qbar, const Matrix& R, double phi);

struct SlackWeight {
  double beta = 0.0;
  Matrix S;
};

/// β = 6·C3·(1 + margin), S = β·Ŝ. margin must be strictly positive.
SlackWeight slack_weight(const Matrix& S_hat, double C3, double margin = 0.1);

/// H = (m−1)D0ᵀQyD0 + (ΨDd)ᵀQy(ΨDd) + DdᵀQ̄Dd + (m−1)Qu + R.
Matrix matrix_H(const Matrix& D0, const Matrix& Dd, const Matrix& Psi, const Matrix& Qbar,
                const Matrix& Qy, const Matrix& Qu, const Matrix& R, int m);

/// Su = H + c·I, c > 1.
Matrix default_Su(const Matrix& H, double c = 2.0);

/// True iff Su − H − I is positive definite.
bool check_Su(const Matrix& Su, const Matrix& H);

struct ReferenceAdmissibility {
  bool admissible = false;
  Vector u_r;
  double residual = 0.0;
};

/// Is r = D0·u_r for some u_r in U? Solves min ‖D0u − r‖² over U.
ReferenceAdmissibility check_reference_admissible(const Matrix& D0, const Rectangle& U,
                                                  const Vector& r);

/// u_des ∈ U and D0·u_des ∈ Y.
bool check_target_admissible(const Matrix& D0, const Rectangle& U, const Rectangle& Y,
                             const Vector& u_des);

enum class CertificateKind { kSetpoint, kZone };

/// Every stability-certificate quantity for one controller configuration.
/// Fields that do not apply to the controller kind are left empty / zero.
struct CertificateBundle {
  CertificateKind kind = CertificateKind::kSetpoint;
  int horizon = 1;

  Matrix Qbar;
  Matrix G;
  Matrix Z;
  Matrix S_hat;
  double beta = 0.0;
  Matrix S;
  double C3 = 0.0;
  double phi = 1.0;
  Matrix H;
  Matrix Su;
  double gammaZ = 0.0;
  double gammaQbar = 0.0;
  double gammaZminusR = 0.0;
  Vector u_r;

  double lyapunov_residual = 0.0;
  double g_identity_residual = 0.0;
  bool lyapunov_ok = false;
  bool g_identity_ok = false;
  bool beta_ok = false;
  bool su_ok = false;
  bool phi_heuristic = false;
  bool reference_admissible = false;
  bool target_admissible = false;
};

struct CertificateOptions {
  double rank_tol = kDefaultRankTolerance;
  double margin = 0.1;
  double su_shift = 2.0;
  PhiOptions phi;
  std::optional<double> beta_override;
  std::optional<double> phi_override;
};

/// Q̄, G, Z, Ŝ, φ, C3, β and S for the set-point controller.
CertificateBundle certify_setpoint(const OpomModel& model, const Matrix& Q, const Matrix& R, int m,
                                   const Rectangle& U, const Vector& r,
                                   const CertificateOptions& options = {});

/// Q̄, G, H and Su for the zone controller. su_override replaces H + c·I.
CertificateBundle certify_zone(const OpomModel& model, const Matrix& Qy, const Matrix& Qu,
                               const Matrix& R, int m, const Rectangle& U, const Rectangle& Y,
                               const Vector& u_des, const CertificateOptions& options = {},
                               const std::optional<Matrix>& su_override = std::nullopt);

}  // namespace ihmpc
