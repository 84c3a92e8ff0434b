#include "ihmpc/opom.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

#include "ihmpc/error.hpp"

namespace ihmpc {

namespace {

void require_vector(const Vector& v, Eigen::Index n, const char* what) {
  if (v.size() != n) {
    throw Error(ErrorCode::kDimension, std::string(what) + " has length " +
                                           std::to_string(v.size()) + ", expected " +
                                           std::to_string(n));
  }
}

}  // namespace

OpomModel::OpomModel(Matrix D0, Matrix F, Matrix Dd, Matrix Psi)
    : D0_(std::move(D0)), F_(std::move(F)), Dd_(std::move(Dd)), Psi_(std::move(Psi)) {
  const auto nd = F_.rows();
  if (F_.cols() != nd) throw Error(ErrorCode::kDimension, "F must be square");
  if (Dd_.rows() != nd || Dd_.cols() != D0_.cols()) {
    throw Error(ErrorCode::kDimension, "Dd must be nd x nu");
  }
  if (Psi_.rows() != D0_.rows() || Psi_.cols() != nd) {
    throw Error(ErrorCode::kDimension, "Psi must be ny x nd");
  }
  if (D0_.rows() == 0 || D0_.cols() == 0) {
    throw Error(ErrorCode::kDimension, "D0 must have at least one row and column");
  }
  if (!all_finite(D0_) || !all_finite(F_) || !all_finite(Dd_) || !all_finite(Psi_)) {
    throw Error(ErrorCode::kDomain, "model matrices must be finite");
  }
  rho_ = ihmpc::spectral_radius(F_);
  if (!(rho_ < 1.0)) {
    throw Error(ErrorCode::kUnstableModel,
                "spectral radius of F is " + std::to_string(rho_) + ", must be < 1");
  }
}

OpomModel OpomModel::static_gain(Matrix D0) {
  const auto ny = D0.rows();
  const auto nu = D0.cols();
  return OpomModel(std::move(D0), Matrix(0, 0), Matrix(0, nu), Matrix(ny, 0));
}

PlantState PlantState::origin(const OpomModel& model) {
  return PlantState{Vector::Zero(model.ny()), Vector::Zero(model.nd()), Vector::Zero(model.nu())};
}

bool is_origin(const PlantState& state) {
  auto zero = [](const Vector& v) { return v.size() == 0 || v.isZero(0.0); };
  return zero(state.xs) && zero(state.xd) && zero(state.u);
}

OpomModel build_from_modes(const Matrix& D0, const std::vector<Mode>& modes) {
  const int ny = static_cast<int>(D0.rows());
  const int nu = static_cast<int>(D0.cols());
  int nd = 0;
  for (const Mode& mode : modes) {
    if (!(std::abs(mode.pole) < 1.0)) {
      throw Error(ErrorCode::kUnstableModel, "mode pole has modulus >= 1");
    }
    if (mode.output_index < 0 || mode.output_index >= ny || mode.input_index < 0 ||
        mode.input_index >= nu) {
      throw Error(ErrorCode::kDimension, "mode index out of range");
    }
    nd += mode.pole.imag() == 0.0 ? 1 : 2;
  }

  Matrix F = Matrix::Zero(nd, nd);
  Matrix Dd = Matrix::Zero(nd, nu);
  Matrix Psi = Matrix::Zero(ny, nd);
  int row = 0;
  for (const Mode& mode : modes) {
    const double a = mode.pole.real();
    const double b = mode.pole.imag();
    const int out = mode.output_index;
    const int in = mode.input_index;
    if (b == 0.0) {
      F(row, row) = a;
      Dd(row, in) = mode.residue.real();
      Psi(out, row) = 1.0;
      row += 1;
    } else {
      // State (Re ξ, −Im ξ) of ξ' = p·ξ + residue·Δu; the pair contributes 2·Re ξ.
      F(row, row) = a;
      F(row, row + 1) = b;
      F(row + 1, row) = -b;
      F(row + 1, row + 1) = a;
      Dd(row, in) = mode.residue.real();
      Dd(row + 1, in) = -mode.residue.imag();
      Psi(out, row) = 2.0;
      row += 2;
    }
  }
  return OpomModel(D0, std::move(F), std::move(Dd), std::move(Psi));
}

double spectral_radius(const Matrix& M) {
  if (M.rows() != M.cols()) throw Error(ErrorCode::kDimension, "spectral_radius needs a square matrix");
  if (M.size() == 0) return 0.0;
  if (!M.allFinite()) throw Error(ErrorCode::kDomain, "matrix has non-finite entries");
  Eigen::EigenSolver<Matrix> es(M, false);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorCode::kSolverFailure, "eigenvalue iteration did not converge");
  }
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

void check_state(const OpomModel& model, const PlantState& state) {
  require_vector(state.xs, model.ny(), "xs");
  require_vector(state.xd, model.nd(), "xd");
  require_vector(state.u, model.nu(), "u");
}

PlantState plant_step(const OpomModel& model, const PlantState& state, const Vector& du) {
  check_state(model, state);
  require_vector(du, model.nu(), "du");
  PlantState next;
  next.xs = state.xs + model.D0() * du;
  next.xd = model.F() * state.xd + model.Dd() * du;
  next.u = state.u + du;
  return next;
}

Vector output(const OpomModel& model, const PlantState& state) {
  check_state(model, state);
  return state.xs + model.Psi() * state.xd;
}

Prediction predict(const OpomModel& model, const PlantState& state, const MoveSequence& du_seq) {
  if (du_seq.empty()) throw Error(ErrorCode::kInvalidArgument, "empty move sequence");
  check_state(model, state);
  Prediction p;
  const auto m = du_seq.size();
  p.xs.reserve(m);
  p.xd.reserve(m);
  p.y.reserve(m);
  p.u.reserve(m);
  PlantState s = state;
  for (const Vector& du : du_seq) {
    s = plant_step(model, s, du);
    p.xs.push_back(s.xs);
    p.xd.push_back(s.xd);
    p.y.push_back(s.xs + model.Psi() * s.xd);
    p.u.push_back(s.u);
  }
  return p;
}

}  // namespace ihmpc
