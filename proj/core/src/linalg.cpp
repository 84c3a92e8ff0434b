#include "ihmpc/linalg.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "ihmpc/error.hpp"

namespace ihmpc {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimension: return "dimension error";
    case ErrorCode::kUnstableModel: return "unstable model";
    case ErrorCode::kDomain: return "domain error";
    case ErrorCode::kRankTolerance: return "rank tolerance error";
    case ErrorCode::kInfeasibleReference: return "infeasible reference";
    case ErrorCode::kInsufficientSamples: return "insufficient samples";
    case ErrorCode::kStateMismatch: return "state mismatch";
    case ErrorCode::kNotApplicable: return "not applicable";
    case ErrorCode::kInfeasibleCandidate: return "infeasible candidate";
    case ErrorCode::kSolverFailure: return "solver failure";
    case ErrorCode::kCertificate: return "certificate violation";
    case ErrorCode::kUnsupported: return "unsupported";
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kIo: return "i/o error";
  }
  return "error";
}

Rectangle::Rectangle(Vector lo, Vector hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
  if (lo_.size() != hi_.size()) {
    throw Error(ErrorCode::kDimension, "rectangle bounds have different lengths");
  }
  for (Eigen::Index i = 0; i < lo_.size(); ++i) {
    if (std::isnan(lo_[i]) || std::isnan(hi_[i])) {
      throw Error(ErrorCode::kDomain, "rectangle bound is NaN");
    }
    if (lo_[i] > 0.0 || hi_[i] < 0.0) {
      throw Error(ErrorCode::kDomain, "rectangle must contain origin (coordinate " +
                                          std::to_string(i) + ")");
    }
  }
}

Rectangle Rectangle::symmetric(const Vector& half_width) { return Rectangle(-half_width, half_width); }

Rectangle Rectangle::unbounded(int dim) {
  const double inf = std::numeric_limits<double>::infinity();
  return Rectangle(Vector::Constant(dim, -inf), Vector::Constant(dim, inf));
}

bool Rectangle::is_finite() const { return lo_.allFinite() && hi_.allFinite(); }

bool Rectangle::contains(const Vector& v, double tol) const {
  if (v.size() != lo_.size()) return false;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] < lo_[i] - tol || v[i] > hi_[i] + tol) return false;
  }
  return true;
}

bool Rectangle::contains_in_interior(const Vector& v) const {
  if (v.size() != lo_.size()) return false;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!(v[i] > lo_[i] && v[i] < hi_[i])) return false;
  }
  return true;
}

bool all_finite(const Matrix& m) { return m.size() == 0 || m.allFinite(); }

bool is_symmetric(const Matrix& m, double rel_tol) {
  if (m.rows() != m.cols()) return false;
  if (m.size() == 0) return true;
  const double scale = 1.0 + m.cwiseAbs().maxCoeff();
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

double min_eigenvalue(const Matrix& m) {
  if (m.size() == 0) return std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double max_eigenvalue(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

bool is_positive_definite(const Matrix& m) {
  if (m.rows() != m.cols() || !all_finite(m)) return false;
  if (m.size() == 0) return true;
  return min_eigenvalue(m) > 0.0;
}

void require_symmetric_pd(const Matrix& m, const char* name) {
  if (m.rows() != m.cols()) {
    throw Error(ErrorCode::kDimension, std::string(name) + " must be square");
  }
  if (!all_finite(m)) throw Error(ErrorCode::kDomain, std::string(name) + " has non-finite entries");
  if (!is_symmetric(m)) throw Error(ErrorCode::kDomain, std::string(name) + " must be symmetric");
  if (!is_positive_definite(m)) {
    throw Error(ErrorCode::kDomain, std::string(name) + " must be positive definite");
  }
}

double inf_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return m.cwiseAbs().rowwise().sum().maxCoeff();
}

}  // namespace ihmpc
