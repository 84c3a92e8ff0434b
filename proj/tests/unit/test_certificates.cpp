#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "ihmpc/certificates.hpp"
#include "ihmpc/error.hpp"
#include "oracles.hpp"
#include "random.hpp"

using namespace ihmpc;
using ihmpc::testkit::Rng;

namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }
Vector vec(std::initializer_list<double> d) {
  Vector v(static_cast<int>(d.size()));
  int i = 0;
  for (double x : d) v[i++] = x;
  return v;
}
Matrix diag(std::initializer_list<double> d) { return vec(d).asDiagonal(); }

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no ihmpc::Error thrown";
  return ErrorCode::kIo;
}

}  // namespace

TEST(KernelDecomposition, RegularMatrix) {
  const KernelDecomposition k = kernel_decomposition(Matrix::Identity(2, 2));
  EXPECT_EQ(k.rank, 2);
  EXPECT_EQ(k.Vker.cols(), 0);
  EXPECT_EQ(k.W2.cols(), 0);
}

TEST(KernelDecomposition, CoordinateAligned) {
  const KernelDecomposition k = kernel_decomposition(diag({1.0, 0.0}));
  EXPECT_EQ(k.rank, 1);
  EXPECT_NEAR(std::abs(k.Vker(1, 0)), 1.0, 1e-12);
  EXPECT_NEAR(std::abs(k.W1(0, 0)), 1.0, 1e-12);
  EXPECT_NEAR(std::abs(k.W2(1, 0)), 1.0, 1e-12);
}

TEST(KernelDecomposition, WideRowHasOneDimensionalKernel) {
  Matrix D0(1, 2);
  D0 << 1.0, 1.0;
  const KernelDecomposition k = kernel_decomposition(D0);
  EXPECT_EQ(k.rank, 1);
  ASSERT_EQ(k.Vker.cols(), 1);
  EXPECT_NEAR(std::abs(k.Vker(0, 0)), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(k.Vker(0, 0), -k.Vker(1, 0), 1e-12);
}

TEST(TerminalWeight, GeometricSeries) {
  EXPECT_NEAR(terminal_weight(scalar(0.5), scalar(1.0), scalar(1.0))(0, 0), 1.0 / 3.0, 1e-14);
  EXPECT_NEAR(terminal_weight(scalar(0.9), scalar(2.0), scalar(1.0))(0, 0), 324.0 / 19.0, 1e-11);
  EXPECT_EQ(terminal_weight(Matrix::Zero(2, 2), Matrix::Identity(2, 2), Matrix::Identity(2, 2)),
            Matrix::Zero(2, 2));
}

TEST(TerminalWeight, RejectsUnstableF) {
  EXPECT_EQ(code_of([] { terminal_weight(scalar(1.0), scalar(1.0), scalar(1.0)); }),
            ErrorCode::kUnstableModel);
}

TEST(GramG, ScalarExampleAndStaticCase) {
  const Matrix Qbar = scalar(1.0 / 3.0);
  EXPECT_NEAR(gram_G(scalar(0.5), scalar(1.0), scalar(1.0), Qbar, 3)(0, 0), 4.0 / 3.0, 1e-14);
  EXPECT_EQ(gram_G(Matrix(0, 0), Matrix(1, 0), scalar(1.0), Matrix(0, 0), 3).size(), 0);
}

TEST(MatrixZ, Examples) {
  EXPECT_EQ(matrix_Z(scalar(1.0), scalar(0.0), scalar(5.0)), scalar(1.0));
  EXPECT_NEAR(matrix_Z(scalar(1.0), scalar(1.0), scalar(4.0 / 3.0))(0, 0), 7.0 / 3.0, 1e-15);
  EXPECT_EQ(matrix_Z(scalar(2.0), Matrix(0, 1), Matrix(0, 0)), scalar(2.0));
}

TEST(SHat, Examples) {
  const auto sh = [](const Matrix& D0) { return s_hat(D0, kernel_decomposition(D0)); };
  EXPECT_NEAR(sh(scalar(2.0))(0, 0), 0.25, 1e-15);
  EXPECT_LE((sh(Matrix::Identity(3, 3)) - Matrix::Identity(3, 3)).norm(), 1e-14);
  EXPECT_LE((sh(diag({1.0, 0.0})) - Matrix::Identity(2, 2)).norm(), 1e-14);
}

TEST(ProjectUr, Examples) {
  Matrix D0(1, 2);
  D0 << 1.0, 0.0;
  const KernelDecomposition k = kernel_decomposition(D0);
  const Vector p = project_Ur(vec({2.0, 3.0}), vec({1.0, 0.0}), k);
  EXPECT_NEAR(p[0], 1.0, 1e-15);
  EXPECT_NEAR(p[1], 3.0, 1e-15);
  EXPECT_EQ(project_Ur(vec({1.0, 0.0}), vec({1.0, 0.0}), k), vec({1.0, 0.0}));

  const Matrix reg = diag({2.0, -1.0});
  const Vector u_r = vec({0.3, 0.4});
  EXPECT_LE((project_Ur(vec({5.0, -7.0}), u_r, kernel_decomposition(reg)) - u_r).norm(), 1e-14);
}

TEST(PhiLowerBound, Examples) {
  EXPECT_EQ(phi_lower_bound(scalar(2.0), Rectangle::symmetric(vec({1.0})), vec({0.0}),
                            kernel_decomposition(scalar(2.0))),
            1.0);
  Matrix D0(1, 2);
  D0 << 1.0, 0.0;
  const Rectangle U = Rectangle::symmetric(vec({1.0, 1.0}));
  PhiOptions opt;
  opt.n_samples = 2000;
  EXPECT_NEAR(phi_lower_bound(D0, U, vec({0.0, 0.0}), kernel_decomposition(D0), opt), 0.9, 1e-12);
  opt.n_samples = 0;
  EXPECT_EQ(code_of([&] { phi_lower_bound(D0, U, vec({0.0, 0.0}), kernel_decomposition(D0), opt); }),
            ErrorCode::kInsufficientSamples);
}

TEST(PhiLowerBound, ObliqueKernelGivesEstimateBelowOne) {
  Matrix D0(1, 2);
  D0 << 1.0, 1.0;
  const Rectangle U = Rectangle::symmetric(vec({1.0, 1.0}));
  PhiOptions opt;
  opt.n_samples = 5000;
  const double phi = phi_lower_bound(D0, U, vec({0.4, 0.4}), kernel_decomposition(D0), opt);
  EXPECT_GT(phi, 0.0);
  EXPECT_LE(phi, 0.9);
}

TEST(Gamma, Examples) {
  EXPECT_DOUBLE_EQ(gamma(scalar(4.0)), 2.0);
  EXPECT_NEAR(gamma(diag({1.0, 9.0})), 3.0, 1e-14);
  EXPECT_EQ(gamma(Matrix::Zero(2, 2)), 0.0);
  EXPECT_EQ(code_of([] { gamma(scalar(-1.0)); }), ErrorCode::kDomain);
}

TEST(C3, Examples) {
  EXPECT_NEAR(c3(scalar(4.0), scalar(1.0), scalar(1.0), 1.0), 8.0, 1e-14);
  EXPECT_NEAR(c3(scalar(3.0), Matrix(0, 0), scalar(3.0), 0.5), 2.0 / 0.25 * 3.0, 1e-13);
  EXPECT_EQ(code_of([] { c3(scalar(1.0), scalar(1.0), scalar(2.0), 1.0); }), ErrorCode::kDomain);
}

TEST(SlackWeight, Examples) {
  const SlackWeight w = slack_weight(scalar(0.25), 8.0, 0.1);
  EXPECT_NEAR(w.beta, 52.8, 1e-13);
  EXPECT_NEAR(w.S(0, 0), 13.2, 1e-13);
  EXPECT_EQ(code_of([] { slack_weight(scalar(0.25), 8.0, 0.0); }), ErrorCode::kInvalidArgument);
}

TEST(MatrixH, Examples) {
  const Matrix H1 = matrix_H(scalar(1.0), Matrix(0, 1), Matrix(1, 0), Matrix(0, 0), scalar(1.0),
                             scalar(1.0), scalar(2.5), 1);
  EXPECT_EQ(H1, scalar(2.5));
  const Matrix H2 = matrix_H(scalar(1.0), scalar(1.0), scalar(1.0), scalar(1.0 / 3.0), scalar(1.0),
                             scalar(1.0), scalar(1.0), 2);
  EXPECT_NEAR(H2(0, 0), 13.0 / 3.0, 1e-14);
}

TEST(SuCheck, Examples) {
  const Matrix H = scalar(1.0);
  EXPECT_EQ(default_Su(H, 2.0), scalar(3.0));
  EXPECT_TRUE(check_Su(default_Su(H, 2.0), H));
  EXPECT_FALSE(check_Su(H + scalar(1.0), H));
  EXPECT_FALSE(check_Su(H + scalar(0.5), H));
}

TEST(ReferenceAdmissible, Examples) {
  const Rectangle U = Rectangle::symmetric(vec({1.0}));
  const ReferenceAdmissibility a0 = check_reference_admissible(scalar(2.0), U, vec({0.0}));
  EXPECT_TRUE(a0.admissible);
  EXPECT_EQ(a0.u_r.norm(), 0.0);
  const ReferenceAdmissibility a1 = check_reference_admissible(scalar(2.0), U, vec({1.0}));
  EXPECT_TRUE(a1.admissible);
  EXPECT_NEAR(a1.u_r[0], 0.5, 1e-12);
  const ReferenceAdmissibility a3 = check_reference_admissible(scalar(2.0), U, vec({3.0}));
  EXPECT_FALSE(a3.admissible);
  EXPECT_NEAR(a3.residual, 1.0, 1e-9);
}

TEST(ReferenceAdmissible, RankDeficientReferenceIsMatchedExactly) {
  Matrix D0(2, 3);
  D0 << 1.0, 2.0, -1.0, 0.5, 1.0, -0.5;
  const Vector r = D0 * vec({0.3, 0.2, -0.1});
  const ReferenceAdmissibility a = check_reference_admissible(D0, Rectangle::symmetric(vec({1, 1, 1})), r);
  EXPECT_TRUE(a.admissible);
  EXPECT_LE((D0 * a.u_r - r).norm(), 1e-12);
  EXPECT_FALSE(check_reference_admissible(D0, Rectangle::symmetric(vec({1, 1, 1})), vec({0.8, 0.0})).admissible);
}

TEST(TargetAdmissible, Examples) {
  const Rectangle U = Rectangle::symmetric(vec({1.0}));
  const Rectangle Y(vec({0.0}), vec({2.0}));
  EXPECT_TRUE(check_target_admissible(scalar(1.0), U, Y, vec({0.0})));
  EXPECT_TRUE(check_target_admissible(scalar(1.0), U, Y, vec({0.5})));
  EXPECT_FALSE(check_target_admissible(scalar(1.0), U, Y, vec({1.5})));
}

TEST(CertifySetpoint, ScalarBundleIsConsistent) {
  const OpomModel m(scalar(2.0), scalar(0.5), scalar(1.0), scalar(1.0));
  const CertificateBundle b =
      certify_setpoint(m, scalar(1.0), scalar(1.0), 3, Rectangle::symmetric(vec({2.0})), vec({1.0}));
  EXPECT_NEAR(b.Qbar(0, 0), 1.0 / 3.0, 1e-14);
  EXPECT_NEAR(b.G(0, 0), 4.0 / 3.0, 1e-14);
  EXPECT_NEAR(b.Z(0, 0), 7.0 / 3.0, 1e-14);
  EXPECT_NEAR(b.S_hat(0, 0), 0.25, 1e-15);
  EXPECT_EQ(b.phi, 1.0);
  EXPECT_FALSE(b.phi_heuristic);
  // max(Γ_Z², 2Γ_Q̄Γ_{Z−R}) = max(7/3, 2·sqrt(1/3)·sqrt(4/3)) = 7/3
  EXPECT_NEAR(b.C3, 14.0 / 3.0, 1e-13);
  EXPECT_NEAR(b.beta, 6.6 * b.C3, 1e-12);
  EXPECT_TRUE(b.beta_ok && b.lyapunov_ok && b.g_identity_ok && b.reference_admissible);
  EXPECT_NEAR(b.u_r[0], 0.5, 1e-12);
}

TEST(CertifyZone, ScalarBundleIsConsistent) {
  const OpomModel m(scalar(1.0), scalar(0.5), scalar(1.0), scalar(1.0));
  const CertificateBundle b = certify_zone(m, scalar(1.0), scalar(1.0), scalar(1.0), 2,
                                           Rectangle::symmetric(vec({2.0})), Rectangle(vec({-1.0}), vec({2.0})),
                                           vec({0.5}));
  EXPECT_NEAR(b.H(0, 0), 13.0 / 3.0, 1e-14);
  EXPECT_NEAR(b.Su(0, 0), 19.0 / 3.0, 1e-14);
  EXPECT_TRUE(b.su_ok && b.target_admissible);
  const CertificateBundle weak =
      certify_zone(m, scalar(1.0), scalar(1.0), scalar(1.0), 2, Rectangle::symmetric(vec({2.0})),
                   Rectangle(vec({-1.0}), vec({2.0})), vec({0.5}), {}, scalar(5.0));
  EXPECT_FALSE(weak.su_ok);
}

// --- properties -----------------------------------------------------------------

TEST(CertificateProperties, LyapunovResidualPsdAndSeriesOracle) {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const int nd = rng.integer(1, 8);
    const int ny = rng.integer(1, 3);
    const Matrix F = rng.stable(nd, rng.uniform(0.0, 0.95));
    const Matrix Psi = rng.matrix(ny, nd);
    const Matrix Q = rng.spd(ny);
    const Matrix Qbar = terminal_weight(F, Psi, Q);
    const Matrix res = Qbar - F.transpose() * Qbar * F - F.transpose() * Psi.transpose() * Q * Psi * F;
    EXPECT_LE(inf_norm(res), 1e-10 * (1.0 + inf_norm(Qbar)));
    EXPECT_GE(min_eigenvalue(Qbar), -1e-10);
    EXPECT_LE((Qbar - testkit::truncated_terminal_weight(F, Psi, Q)).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(CertificateProperties, GIdentityForSeveralHorizons) {
  Rng rng(22);
  for (int trial = 0; trial < 30; ++trial) {
    const int nd = rng.integer(1, 6);
    const int ny = rng.integer(1, 3);
    const Matrix F = rng.stable(nd, rng.uniform(0.0, 0.95));
    const Matrix Psi = rng.matrix(ny, nd);
    const Matrix Q = rng.spd(ny);
    const Matrix Qbar = terminal_weight(F, Psi, Q);
    const Matrix expect = Psi.transpose() * Q * Psi + Qbar;
    for (int m : {1, 2, 5}) {
      EXPECT_LE((gram_G(F, Psi, Q, Qbar, m) - expect).cwiseAbs().maxCoeff(), 1e-10 * (1.0 + inf_norm(expect)));
    }
  }
}

TEST(CertificateProperties, SHatIsometryOnRowSpace) {
  Rng rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const int ny = rng.integer(1, 4);
    const int nu = rng.integer(1, 4);
    const int rank = rng.integer(1, std::min(ny, nu));
    const Matrix D0 = rng.with_rank(ny, nu, rank);
    const KernelDecomposition k = kernel_decomposition(D0);
    ASSERT_EQ(k.rank, rank);
    const Matrix S = s_hat(D0, k);
    EXPECT_GT(min_eigenvalue(S), 0.0);
    for (int i = 0; i < 100; ++i) {
      const Vector v = D0.transpose() * rng.vector(ny);
      const Vector w = D0 * v;
      EXPECT_LE(std::abs(w.dot(S * w) - v.squaredNorm()), 1e-9 * (1.0 + v.squaredNorm()));
      if (k.Vker.cols() > 0) EXPECT_LE((D0 * (k.Vker * rng.vector(k.Vker.cols()))).norm(), 1e-12);
    }
  }
}

TEST(CertificateProperties, SHatRegularShortcut) {
  Rng rng(24);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = rng.integer(1, 4);
    const Matrix D0 = rng.with_rank(n, n, n);
    const Matrix inv = D0.inverse();
    EXPECT_LE((s_hat(D0, kernel_decomposition(D0)) - inv.transpose() * inv).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(CertificateProperties, ProjectUrIdempotentAndOnTarget) {
  Rng rng(25);
  for (int trial = 0; trial < 50; ++trial) {
    const int ny = rng.integer(1, 3);
    const int nu = rng.integer(1, 4);
    const Matrix D0 = rng.with_rank(ny, nu, rng.integer(1, std::min(ny, nu)));
    const KernelDecomposition k = kernel_decomposition(D0);
    const Vector u_r = rng.vector(nu);
    const Vector r = D0 * u_r;
    const Vector p = project_Ur(rng.vector(nu, -3.0, 3.0), u_r, k);
    EXPECT_LE((project_Ur(p, u_r, k) - p).norm(), 1e-10);
    EXPECT_LE((D0 * p - r).norm(), 1e-10);
  }
}

TEST(CertificateProperties, C3MonotoneInPhiAndHomogeneous) {
  Rng rng(26);
  for (int trial = 0; trial < 50; ++trial) {
    const int nu = rng.integer(1, 3);
    const int nd = rng.integer(0, 3);
    const Matrix R = rng.spd(nu);
    const Matrix Dd = rng.matrix(nd, nu);
    const Matrix G = rng.spd(nd);
    const Matrix Qbar = rng.spd(nd);
    const Matrix Z = matrix_Z(R, Dd, G);
    const double a = rng.uniform(0.05, 1.0);
    const double b = rng.uniform(0.05, 1.0);
    EXPECT_GE(c3(Z, Qbar, R, std::min(a, b)), c3(Z, Qbar, R, std::max(a, b)));
    const double t = rng.uniform(0.1, 10.0);
    const double base = c3(Z, Qbar, R, a);
    EXPECT_NEAR(c3(t * Z, t * Qbar, t * R, a), t * base, 1e-10 * t * base);
  }
}
