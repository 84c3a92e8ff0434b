#include "ihmpc/certificates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <unsupported/Eigen/KroneckerProduct>

#include "ihmpc/error.hpp"
#include "ihmpc/qp.hpp"

namespace ihmpc {

namespace {

// Smallest φ we report; keeps C3 finite when every sample is nearly orthogonal.
constexpr double kPhiFloor = 1e-12;

Matrix output_weight(const Matrix& F, const Matrix& Psi, const Matrix& Q) {
  return F.transpose() * Psi.transpose() * Q * Psi * F;
}

void check_square(const Matrix& m, Eigen::Index n, const char* name) {
  if (m.rows() != n || m.cols() != n) {
    throw Error(ErrorCode::kDimension, std::string(name) + " must be " + std::to_string(n) + "x" +
                                           std::to_string(n));
  }
}

}  // namespace

KernelDecomposition kernel_decomposition(const Matrix& D0, double rank_tol) {
  if (!all_finite(D0)) throw Error(ErrorCode::kDomain, "D0 has non-finite entries");
  if (!(rank_tol >= 0.0) || !(rank_tol < 1.0)) {
    throw Error(ErrorCode::kRankTolerance, "rank tolerance must lie in [0, 1)");
  }
  const auto ny = D0.rows();
  const auto nu = D0.cols();
  KernelDecomposition out;
  if (ny == 0 || nu == 0) {
    out.Vker = Matrix::Identity(nu, nu);
    out.W2 = Matrix::Identity(ny, ny);
    out.Vperp = Matrix(nu, 0);
    out.W1 = Matrix(ny, 0);
    return out;
  }
  Eigen::JacobiSVD<Matrix> svd(D0, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& sv = svd.singularValues();
  const double cut = rank_tol * sv[0];
  int k = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv[i] > cut && sv[i] > 0.0) ++k;
  }
  out.rank = k;
  out.Vperp = svd.matrixV().leftCols(k);
  out.Vker = svd.matrixV().rightCols(nu - k);
  out.W1 = svd.matrixU().leftCols(k);
  out.W2 = svd.matrixU().rightCols(ny - k);
  return out;
}

Matrix terminal_weight(const Matrix& F, const Matrix& Psi, const Matrix& Q) {
  const auto nd = F.rows();
  check_square(F, nd, "F");
  check_square(Q, Psi.rows(), "Q");
  if (Psi.cols() != nd) throw Error(ErrorCode::kDimension, "Psi must have nd columns");
  if (nd == 0) return Matrix(0, 0);
  if (spectral_radius(F) >= 1.0) {
    throw Error(ErrorCode::kUnstableModel, "terminal weight needs spectral radius of F below 1");
  }
  const Matrix C = output_weight(F, Psi, Q);
  const Matrix Ft = F.transpose();
  const Matrix K = Matrix::Identity(nd * nd, nd * nd) - Eigen::kroneckerProduct(Ft, Ft).eval();
  const Vector rhs = Eigen::Map<const Vector>(C.data(), nd * nd);
  const Vector sol = K.fullPivLu().solve(rhs);
  const Matrix Qbar = Eigen::Map<const Matrix>(sol.data(), nd, nd);
  return symmetrize(Qbar);
}

Matrix gram_G(const Matrix& F, const Matrix& Psi, const Matrix& Q, const Matrix& Qbar, int m) {
  if (m < 1) throw Error(ErrorCode::kInvalidArgument, "horizon must be at least 1");
  const auto nd = F.rows();
  check_square(Qbar, nd, "Qbar");
  Matrix G = Matrix::Zero(nd, nd);
  Matrix Fj = Matrix::Identity(nd, nd);
  const Matrix W = Psi.transpose() * Q * Psi;
  for (int j = 0; j < m; ++j) {
    G += Fj.transpose() * W * Fj;
    if (j + 1 < m) Fj = F * Fj;
  }
  // Fj is now F^{m−1}.
  G += Fj.transpose() * Qbar * Fj;
  return symmetrize(G);
}

Matrix matrix_Z(const Matrix& R, const Matrix& Dd, const Matrix& G) {
  check_square(R, Dd.cols(), "R");
  check_square(G, Dd.rows(), "G");
  return symmetrize(R + Dd.transpose() * G * Dd);
}

Matrix s_hat(const Matrix& D0, const KernelDecomposition& decomp) {
  const int k = decomp.rank;
  const Matrix M = decomp.W1.transpose() * D0 * decomp.Vperp;
  Matrix out = decomp.W2 * decomp.W2.transpose();
  if (k == 0) return out;
  // M = L·O from the QR factorization of Mᵀ = Õ·R̃, so L = R̃ᵀ.
  Eigen::HouseholderQR<Matrix> qr(M.transpose());
  const Matrix Rt = qr.matrixQR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  const Matrix L = Rt.transpose();
  const Vector diag = L.diagonal().cwiseAbs();
  if (diag.minCoeff() <= 1e-14 * std::max(diag.maxCoeff(), 1e-300)) {
    throw Error(ErrorCode::kRankTolerance, "restricted static gain is numerically singular");
  }
  const Matrix Linv = L.triangularView<Eigen::Lower>().solve(Matrix::Identity(k, k));
  out += decomp.W1 * Linv.transpose() * Linv * decomp.W1.transpose();
  return symmetrize(out);
}

Vector project_Ur(const Vector& u, const Vector& u_r, const KernelDecomposition& decomp) {
  if (u.size() != u_r.size() || u.size() != decomp.Vker.rows()) {
    throw Error(ErrorCode::kDimension, "project_Ur operand sizes differ");
  }
  return u_r + decomp.Vker * (decomp.Vker.transpose() * (u - u_r));
}

double phi_lower_bound(const Matrix& D0, const Rectangle& U, const Vector& u_r,
                       const KernelDecomposition& decomp, const PhiOptions& options) {
  if (options.n_samples <= 0) {
    throw Error(ErrorCode::kInsufficientSamples, "phi estimate needs at least one sample");
  }
  if (!(options.safety > 0.0 && options.safety <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "phi safety factor must lie in (0, 1]");
  }
  const int nu = static_cast<int>(D0.cols());
  if (U.dim() != nu || u_r.size() != nu) throw Error(ErrorCode::kDimension, "phi operand sizes differ");
  if (decomp.rank == nu) return 1.0;
  if (!U.is_finite()) throw Error(ErrorCode::kDomain, "phi sampling needs a bounded input box");
  if (!U.contains(u_r, 1e-9)) {
    throw Error(ErrorCode::kInfeasibleReference, "u_r lies outside the input box");
  }

  // Π_r x = argmin ½‖y − x‖² s.t. Vperpᵀy = Vperpᵀu_r, y ∈ U.
  QuadProgram qp = make_qp(Matrix::Identity(nu, nu), Vector::Zero(nu));
  qp.Aeq = decomp.Vperp.transpose();
  qp.beq = decomp.Vperp.transpose() * u_r;
  qp.Aineq = Matrix::Identity(nu, nu);
  qp.lo = U.lo();
  qp.hi = U.hi();

  std::mt19937_64 rng(options.seed);
  std::vector<std::uniform_real_distribution<double>> dist;
  for (int i = 0; i < nu; ++i) dist.emplace_back(U.lo()[i], U.hi()[i]);

  const double scale = 1.0 + (U.hi() - U.lo()).lpNorm<Eigen::Infinity>();
  double min_cos = 1.0;
  int used = 0;
  Vector x(nu);
  for (int s = 0; s < options.n_samples; ++s) {
    for (int i = 0; i < nu; ++i) x[i] = dist[i](rng);
    if ((decomp.Vperp.transpose() * (x - u_r)).norm() <= 1e-9 * scale) continue;
    qp.q = -x;
    const QpSolution sol = solve(qp);
    if (sol.status == QpStatus::kInfeasible) {
      throw Error(ErrorCode::kInfeasibleReference, "input box does not meet u_r + ker D0");
    }
    if (sol.status != QpStatus::kOptimal) continue;
    const Vector a = project_Ur(x, u_r, decomp) - x;
    const Vector b = sol.z - x;
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) continue;
    min_cos = std::min(min_cos, std::abs(a.dot(b)) / (na * nb));
    ++used;
  }
  if (used == 0) throw Error(ErrorCode::kInsufficientSamples, "no usable phi samples");
  return std::clamp(options.safety * min_cos, kPhiFloor, 1.0);
}

double gamma(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  if (M.rows() != M.cols() || !all_finite(M) || !is_symmetric(M)) {
    throw Error(ErrorCode::kDomain, "gamma needs a finite symmetric matrix");
  }
  const double scale = 1.0 + inf_norm(M);
  if (min_eigenvalue(M) < -1e-10 * scale) {
    throw Error(ErrorCode::kDomain, "gamma needs a positive semidefinite matrix");
  }
  return std::sqrt(std::max(0.0, max_eigenvalue(M)));
}

double c3(const Matrix& Z, const Matrix& Qbar, const Matrix& R, double phi) {
  if (!(phi > 0.0 && phi <= 1.0)) throw Error(ErrorCode::kDomain, "phi must lie in (0, 1]");
  if (Z.rows() != R.rows() || Z.cols() != R.cols()) {
    throw Error(ErrorCode::kDimension, "Z and R must have the same shape");
  }
  const double gz = gamma(Z);
  const double gq = gamma(Qbar);
  const double gzr = gamma(Z - R);
  return 2.0 / (phi * phi) * std::max(gz * gz, 2.0 * gq * gzr);
}

SlackWeight slack_weight(const Matrix& S_hat, double C3, double margin) {
  if (!(margin > 0.0) || !std::isfinite(margin)) {
    throw Error(ErrorCode::kInvalidArgument, "margin must be strictly positive");
  }
  if (!(C3 > 0.0) || !std::isfinite(C3)) throw Error(ErrorCode::kInvalidArgument, "C3 must be positive");
  SlackWeight out;
  out.beta = 6.0 * C3 * (1.0 + margin);
  out.S = out.beta * S_hat;
  return out;
}

Matrix matrix_H(const Matrix& D0, const Matrix& Dd, const Matrix& Psi, const Matrix& Qbar,
                const Matrix& Qy, const Matrix& Qu, const Matrix& R, int m) {
  if (m < 1) throw Error(ErrorCode::kInvalidArgument, "horizon must be at least 1");
  const double m1 = static_cast<double>(m - 1);
  const Matrix PD = Psi * Dd;
  const Matrix H = m1 * D0.transpose() * Qy * D0 + PD.transpose() * Qy * PD +
                   Dd.transpose() * Qbar * Dd + m1 * Qu + R;
  return symmetrize(H);
}

Matrix default_Su(const Matrix& H, double c) {
  if (!(c > 1.0) || !std::isfinite(c)) throw Error(ErrorCode::kInvalidArgument, "Su shift must exceed 1");
  return H + c * Matrix::Identity(H.rows(), H.cols());
}

bool check_Su(const Matrix& Su, const Matrix& H) {
  if (Su.rows() != H.rows() || Su.cols() != H.cols()) return false;
  return is_positive_definite(Su - H - Matrix::Identity(H.rows(), H.cols()));
}

ReferenceAdmissibility check_reference_admissible(const Matrix& D0, const Rectangle& U,
                                                  const Vector& r) {
  const auto nu = D0.cols();
  if (U.dim() != nu || r.size() != D0.rows()) {
    throw Error(ErrorCode::kDimension, "admissibility operand sizes differ");
  }
  ReferenceAdmissibility out;
  const double tol = 1e-8 * (1.0 + r.norm());

  // Least squares over U, with a vanishing ridge so the minimizer is unique.
  const double ridge = 1e-12 * (1.0 + D0.squaredNorm());
  QuadProgram qp = make_qp(2.0 * (D0.transpose() * D0 + ridge * Matrix::Identity(nu, nu)),
                           -2.0 * D0.transpose() * r, r.squaredNorm());
  qp.Aineq = Matrix::Identity(nu, nu);
  qp.lo = U.lo();
  qp.hi = U.hi();
  const QpSolution ls = solve(qp);
  if (ls.status != QpStatus::kOptimal) {
    throw Error(ErrorCode::kSolverFailure, "reference admissibility QP failed");
  }
  out.u_r = ls.z;
  out.residual = (D0 * out.u_r - r).norm();

  // Snap onto D0·u = r exactly, staying as close to the least-squares point as the box allows.
  const KernelDecomposition dec = kernel_decomposition(D0);
  if (out.residual <= 1e3 * tol && dec.rank > 0) {
    QuadProgram snap = make_qp(Matrix::Identity(nu, nu), -out.u_r);
    snap.Aeq = dec.W1.transpose() * D0;
    snap.beq = dec.W1.transpose() * r;
    snap.Aineq = Matrix::Identity(nu, nu);
    snap.lo = U.lo();
    snap.hi = U.hi();
    const QpSolution exact = solve(snap);
    if (exact.status == QpStatus::kOptimal) {
      const double res = (D0 * exact.z - r).norm();
      if (res <= out.residual) {
        out.u_r = exact.z;
        out.residual = res;
      }
    }
  }
  out.admissible = out.residual <= tol;
  return out;
}

bool check_target_admissible(const Matrix& D0, const Rectangle& U, const Rectangle& Y,
                             const Vector& u_des) {
  if (U.dim() != D0.cols() || Y.dim() != D0.rows() || u_des.size() != D0.cols()) {
    throw Error(ErrorCode::kDimension, "target admissibility operand sizes differ");
  }
  return U.contains(u_des) && Y.contains(D0 * u_des);
}

namespace {

void fill_residuals(CertificateBundle& b, const OpomModel& model, const Matrix& Q) {
  const Matrix& F = model.F();
  const Matrix& Psi = model.Psi();
  if (model.nd() == 0) {
    b.lyapunov_residual = 0.0;
    b.g_identity_residual = 0.0;
  } else {
    b.lyapunov_residual = inf_norm(b.Qbar - F.transpose() * b.Qbar * F - output_weight(F, Psi, Q));
    b.g_identity_residual = inf_norm(b.G - (Psi.transpose() * Q * Psi + b.Qbar));
  }
  b.lyapunov_ok = b.lyapunov_residual <= 1e-10 * (1.0 + inf_norm(b.Qbar));
  b.g_identity_ok = b.g_identity_residual <= 1e-10 * (1.0 + inf_norm(b.G));
}

}  // namespace

CertificateBundle certify_setpoint(const OpomModel& model, const Matrix& Q, const Matrix& R, int m,
                                   const Rectangle& U, const Vector& r,
                                   const CertificateOptions& options) {
  check_square(Q, model.ny(), "Q");
  check_square(R, model.nu(), "R");
  require_symmetric_pd(Q, "Q");
  require_symmetric_pd(R, "R");
  if (m < 1) throw Error(ErrorCode::kInvalidArgument, "horizon must be at least 1");

  CertificateBundle b;
  b.kind = CertificateKind::kSetpoint;
  b.horizon = m;
  b.Qbar = terminal_weight(model.F(), model.Psi(), Q);
  b.G = gram_G(model.F(), model.Psi(), Q, b.Qbar, m);
  b.Z = matrix_Z(R, model.Dd(), b.G);
  fill_residuals(b, model, Q);

  const KernelDecomposition dec = kernel_decomposition(model.D0(), options.rank_tol);
  b.S_hat = s_hat(model.D0(), dec);
  const ReferenceAdmissibility adm = check_reference_admissible(model.D0(), U, r);
  b.reference_admissible = adm.admissible;
  b.u_r = adm.u_r;

  if (options.phi_override) {
    b.phi = *options.phi_override;
    if (!(b.phi > 0.0 && b.phi <= 1.0)) throw Error(ErrorCode::kDomain, "phi must lie in (0, 1]");
  } else {
    b.phi = phi_lower_bound(model.D0(), U, adm.u_r, dec, options.phi);
    b.phi_heuristic = dec.rank < model.nu();
  }

  b.gammaZ = gamma(b.Z);
  b.gammaQbar = gamma(b.Qbar);
  b.gammaZminusR = gamma(b.Z - R);
  b.C3 = c3(b.Z, b.Qbar, R, b.phi);
  if (options.beta_override) {
    b.beta = *options.beta_override;
    b.S = b.beta * b.S_hat;
  } else {
    const SlackWeight sw = slack_weight(b.S_hat, b.C3, options.margin);
    b.beta = sw.beta;
    b.S = sw.S;
  }
  b.beta_ok = b.beta > 6.0 * b.C3;
  b.su_ok = true;
  b.target_admissible = true;
  return b;
}

CertificateBundle certify_zone(const OpomModel& model, const Matrix& Qy, const Matrix& Qu,
                               const Matrix& R, int m, const Rectangle& U, const Rectangle& Y,
                               const Vector& u_des, const CertificateOptions& options,
                               const std::optional<Matrix>& su_override) {
  check_square(Qy, model.ny(), "Qy");
  check_square(Qu, model.nu(), "Qu");
  check_square(R, model.nu(), "R");
  require_symmetric_pd(Qy, "Qy");
  require_symmetric_pd(Qu, "Qu");
  require_symmetric_pd(R, "R");
  if (m < 1) throw Error(ErrorCode::kInvalidArgument, "horizon must be at least 1");

  CertificateBundle b;
  b.kind = CertificateKind::kZone;
  b.horizon = m;
  b.Qbar = terminal_weight(model.F(), model.Psi(), Qy);
  b.G = gram_G(model.F(), model.Psi(), Qy, b.Qbar, m);
  b.Z = matrix_Z(R, model.Dd(), b.G);
  fill_residuals(b, model, Qy);
  b.gammaZ = gamma(b.Z);
  b.gammaQbar = gamma(b.Qbar);
  b.gammaZminusR = gamma(b.Z - R);
  b.H = matrix_H(model.D0(), model.Dd(), model.Psi(), b.Qbar, Qy, Qu, R, m);
  if (su_override) {
    check_square(*su_override, model.nu(), "Su");
    b.Su = *su_override;
  } else {
    b.Su = default_Su(b.H, options.su_shift);
  }
  b.su_ok = check_Su(b.Su, b.H);
  b.beta_ok = true;
  b.reference_admissible = true;
  b.target_admissible = check_target_admissible(model.D0(), U, Y, u_des);
  return b;
}

}  // namespace ihmpc
