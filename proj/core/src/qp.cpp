#include "ihmpc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ihmpc/error.hpp"

namespace ihmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEps = std::numeric_limits<double>::epsilon();
// A constraint normal whose component outside the span of the active normals
// is below this fraction of its length is treated as linearly dependent.
constexpr double kDependenceTol = 1e-11;

enum class Origin { kEquality, kFixedRow, kLower, kUpper };

// nᵀz >= rhs for inequalities, nᵀz = rhs for equalities.
struct Constraint {
  Vector normal;
  double rhs = 0.0;
  Origin origin = Origin::kEquality;
  int row = 0;
  double norm1 = 0.0;

  bool is_equality() const { return origin == Origin::kEquality || origin == Origin::kFixedRow; }
};

std::vector<Constraint> collect_constraints(const QuadProgram& qp) {
  std::vector<Constraint> out;
  for (Eigen::Index i = 0; i < qp.Aeq.rows(); ++i) {
    out.push_back({qp.Aeq.row(i).transpose(), qp.beq[i], Origin::kEquality, static_cast<int>(i), 0.0});
  }
  for (Eigen::Index i = 0; i < qp.Aineq.rows(); ++i) {
    const Vector a = qp.Aineq.row(i).transpose();
    const double lo = qp.lo[i];
    const double hi = qp.hi[i];
    if (std::isfinite(lo) && lo == hi) {
      out.push_back({a, lo, Origin::kFixedRow, static_cast<int>(i), 0.0});
      continue;
    }
    if (std::isfinite(lo)) out.push_back({a, lo, Origin::kLower, static_cast<int>(i), 0.0});
    if (std::isfinite(hi)) out.push_back({-a, -hi, Origin::kUpper, static_cast<int>(i), 0.0});
  }
  // Equalities first: they enter the active set before any inequality and
  // are never dropped.
  std::stable_partition(out.begin(), out.end(), [](const Constraint& c) { return c.is_equality(); });
  for (Constraint& c : out) c.norm1 = c.normal.lpNorm<1>();
  return out;
}

// Goldfarb–Idnani dual active-set method. With P = LLᵀ the factor J = L^{-T}Q
// keeps Jᵀ·N_active = [R; 0] where N_active holds the active normals.
class DualActiveSet {
 public:
  DualActiveSet(const QuadProgram& qp, std::vector<Constraint> constraints, int max_iterations)
      : qp_(qp), cons_(std::move(constraints)), n_(qp.num_variables()),
        max_iterations_(max_iterations) {}

  QpStatus run() {
    Eigen::LLT<Matrix> llt(qp_.P);
    if (llt.info() != Eigen::Success) return QpStatus::kNumericalFailure;
    const Matrix U = llt.matrixU();
    if (U.diagonal().minCoeff() <= 0.0) return QpStatus::kNumericalFailure;
    J_ = U.triangularView<Eigen::Upper>().solve(Matrix::Identity(n_, n_));
    R_ = Matrix::Zero(n_, n_);
    x_ = llt.solve(-qp_.q);
    if (!x_.allFinite()) return QpStatus::kNumericalFailure;

    active_.clear();
    u_.clear();
    excluded_.assign(cons_.size(), false);
    is_active_.assign(cons_.size(), false);

    for (std::size_t c = 0; c < cons_.size() && cons_[c].is_equality(); ++c) {
      const QpStatus st = add_equality(static_cast<int>(c));
      if (st != QpStatus::kOptimal) return st;
    }
    num_eq_active_ = static_cast<int>(active_.size());

    while (true) {
      if (++iterations_ > max_iterations_) return QpStatus::kNumericalFailure;
      const int p = most_violated();
      if (p < 0) return QpStatus::kOptimal;
      const QpStatus st = enforce(p);
      if (st != QpStatus::kOptimal) return st;
    }
  }

  const Vector& x() const { return x_; }
  int iterations() const { return iterations_; }

  void fill_duals(Vector& duals_eq, Vector& duals_ineq) const {
    duals_eq = Vector::Zero(qp_.Aeq.rows());
    duals_ineq = Vector::Zero(qp_.Aineq.rows());
    for (std::size_t k = 0; k < active_.size(); ++k) {
      const Constraint& c = cons_[active_[k]];
      switch (c.origin) {
        case Origin::kEquality: duals_eq[c.row] += u_[k]; break;
        case Origin::kFixedRow: duals_ineq[c.row] += u_[k]; break;
        case Origin::kLower: duals_ineq[c.row] += u_[k]; break;
        case Origin::kUpper: duals_ineq[c.row] -= u_[k]; break;
      }
    }
  }

 private:
  int iq() const { return static_cast<int>(active_.size()); }

  double slack(int c) const { return cons_[c].normal.dot(x_) - cons_[c].rhs; }

  double violation_tol(int c) const {
    return 1e-13 * (1.0 + std::abs(cons_[c].rhs) + cons_[c].norm1 * x_.lpNorm<Eigen::Infinity>());
  }

  // d = Jᵀn, z = J2·d2 (primal direction), r = R⁻¹d1 (dual direction).
  void directions(const Vector& normal) {
    d_ = J_.transpose() * normal;
    const int q = iq();
    z_ = J_.rightCols(n_ - q) * d_.tail(n_ - q);
    if (q > 0) {
      r_ = R_.topLeftCorner(q, q).triangularView<Eigen::Upper>().solve(d_.head(q));
    } else {
      r_.resize(0);
    }
  }

  bool dependent() const {
    const int q = iq();
    return d_.tail(n_ - q).norm() <= kDependenceTol * d_.norm();
  }

  // Rotates d so that only its first iq+1 entries are nonzero, updating J,
  // then appends the new column to R.
  void append_active(int c, double multiplier) {
    const int q = iq();
    for (int j = n_ - 1; j >= q + 1; --j) {
      const double a = d_[j - 1];
      const double b = d_[j];
      const double h = std::hypot(a, b);
      if (h == 0.0) continue;
      const double cs = a / h;
      const double sn = b / h;
      d_[j - 1] = h;
      d_[j] = 0.0;
      for (int k = 0; k < n_; ++k) {
        const double t1 = J_(k, j - 1);
        const double t2 = J_(k, j);
        J_(k, j - 1) = cs * t1 + sn * t2;
        J_(k, j) = -sn * t1 + cs * t2;
      }
    }
    R_.col(q).head(q + 1) = d_.head(q + 1);
    active_.push_back(c);
    u_.push_back(multiplier);
    is_active_[c] = true;
  }

  // Removes active position pos and restores the triangular shape of R.
  void remove_active(int pos) {
    const int q = iq();
    is_active_[active_[pos]] = false;
    active_.erase(active_.begin() + pos);
    u_.erase(u_.begin() + pos);
    for (int col = pos; col < q - 1; ++col) R_.col(col) = R_.col(col + 1);
    R_.col(q - 1).setZero();
    const int nq = q - 1;
    for (int j = pos; j < nq; ++j) {
      const double a = R_(j, j);
      const double b = R_(j + 1, j);
      const double h = std::hypot(a, b);
      if (h == 0.0) continue;
      const double cs = a / h;
      const double sn = b / h;
      R_(j, j) = h;
      R_(j + 1, j) = 0.0;
      for (int k = j + 1; k < nq; ++k) {
        const double t1 = R_(j, k);
        const double t2 = R_(j + 1, k);
        R_(j, k) = cs * t1 + sn * t2;
        R_(j + 1, k) = -sn * t1 + cs * t2;
      }
      for (int k = 0; k < n_; ++k) {
        const double t1 = J_(k, j);
        const double t2 = J_(k, j + 1);
        J_(k, j) = cs * t1 + sn * t2;
        J_(k, j + 1) = -sn * t1 + cs * t2;
      }
    }
  }

  QpStatus add_equality(int c) {
    directions(cons_[c].normal);
    if (dependent()) {
      // Implied by the equalities already active; consistent or infeasible.
      const double tol = 1e-9 * (1.0 + std::abs(cons_[c].rhs) +
                                 cons_[c].norm1 * x_.lpNorm<Eigen::Infinity>());
      return std::abs(slack(c)) <= tol ? QpStatus::kOptimal : QpStatus::kInfeasible;
    }
    const double t = -slack(c) / z_.dot(cons_[c].normal);
    x_ += t * z_;
    for (int k = 0; k < iq(); ++k) u_[k] -= t * r_[k];
    append_active(c, t);
    return QpStatus::kOptimal;
  }

  int most_violated() const {
    int best = -1;
    double worst = 0.0;
    for (std::size_t c = 0; c < cons_.size(); ++c) {
      if (cons_[c].is_equality() || is_active_[c] || excluded_[c]) continue;
      const double s = slack(static_cast<int>(c));
      if (s >= -violation_tol(static_cast<int>(c))) continue;
      const double scaled = s / std::max(cons_[c].normal.norm(), kEps);
      if (scaled < worst) {
        worst = scaled;
        best = static_cast<int>(c);
      }
    }
    return best;
  }

  // Steps primal and dual variables until constraint p becomes active.
  QpStatus enforce(int p) {
    const Vector& np = cons_[p].normal;
    double u_plus = 0.0;
    while (true) {
      if (++iterations_ > max_iterations_) return QpStatus::kNumericalFailure;
      directions(np);

      double t1 = kInf;
      int drop = -1;
      for (int k = num_eq_active_; k < iq(); ++k) {
        if (r_[k] > 0.0) {
          const double ratio = u_[k] / r_[k];
          if (ratio < t1) {
            t1 = ratio;
            drop = k;
          }
        }
      }
      double t2 = kInf;
      if (!dependent()) {
        t2 = -slack(p) / z_.dot(np);
        if (t2 < 0.0) t2 = 0.0;
      }
      const double t = std::min(t1, t2);
      if (!std::isfinite(t)) return QpStatus::kInfeasible;

      if (!std::isfinite(t2)) {
        // Dual step only.
        for (int k = 0; k < iq(); ++k) u_[k] -= t * r_[k];
        u_plus += t;
        remove_active(drop);
        continue;
      }

      x_ += t * z_;
      for (int k = 0; k < iq(); ++k) u_[k] -= t * r_[k];
      u_plus += t;
      if (t2 <= t1) {
        directions(np);
        if (dependent()) {
          excluded_[p] = true;
          return QpStatus::kOptimal;
        }
        append_active(p, u_plus);
        return QpStatus::kOptimal;
      }
      remove_active(drop);
    }
  }

  const QuadProgram& qp_;
  std::vector<Constraint> cons_;
  int n_;
  int max_iterations_;
  int iterations_ = 0;
  int num_eq_active_ = 0;

  Matrix J_;
  Matrix R_;
  Vector x_;
  Vector d_;
  Vector z_;
  Vector r_;
  std::vector<int> active_;
  std::vector<double> u_;
  std::vector<bool> is_active_;
  std::vector<bool> excluded_;
};

double kkt_scale(const QuadProgram& qp, const Vector& z) {
  const double zn = z.size() ? z.lpNorm<Eigen::Infinity>() : 0.0;
  const double qn = qp.q.size() ? qp.q.lpNorm<Eigen::Infinity>() : 0.0;
  return 1.0 + qn + inf_norm(qp.P) * zn;
}

}  // namespace

QuadProgram make_qp(Matrix P, Vector q, double constant) {
  QuadProgram qp;
  const auto n = q.size();
  qp.P = std::move(P);
  qp.q = std::move(q);
  qp.constant = constant;
  qp.Aeq = Matrix(0, n);
  qp.beq = Vector(0);
  qp.Aineq = Matrix(0, n);
  qp.lo = Vector(0);
  qp.hi = Vector(0);
  return qp;
}

std::string_view to_string(QpStatus status) {
  switch (status) {
    case QpStatus::kOptimal: return "optimal";
    case QpStatus::kInfeasible: return "infeasible";
    case QpStatus::kNumericalFailure: return "numerical-failure";
  }
  return "unknown";
}

void validate_dimensions(const QuadProgram& qp) {
  const auto n = qp.q.size();
  if (qp.P.rows() != n || qp.P.cols() != n) throw Error(ErrorCode::kDimension, "P must be n x n");
  if (qp.Aeq.cols() != n || qp.Aeq.rows() != qp.beq.size()) {
    throw Error(ErrorCode::kDimension, "Aeq/beq shape mismatch");
  }
  if (qp.Aineq.cols() != n || qp.Aineq.rows() != qp.lo.size() || qp.lo.size() != qp.hi.size()) {
    throw Error(ErrorCode::kDimension, "Aineq/lo/hi shape mismatch");
  }
}

QpSolution solve(const QuadProgram& qp, const QpSettings& settings) {
  validate_dimensions(qp);
  const int n = qp.num_variables();
  QpSolution sol;
  sol.z = Vector::Zero(n);
  sol.duals_eq = Vector::Zero(qp.Aeq.rows());
  sol.duals_ineq = Vector::Zero(qp.Aineq.rows());

  for (Eigen::Index i = 0; i < qp.lo.size(); ++i) {
    if (std::isnan(qp.lo[i]) || std::isnan(qp.hi[i]) || qp.lo[i] > qp.hi[i]) {
      sol.status = QpStatus::kInfeasible;
      return sol;
    }
  }
  if (!all_finite(qp.P) || !all_finite(qp.q) || !all_finite(qp.Aeq) || !all_finite(qp.beq) ||
      !all_finite(qp.Aineq) || !is_symmetric(qp.P)) {
    sol.status = QpStatus::kNumericalFailure;
    return sol;
  }
  if (n == 0) {
    sol.objective = qp.constant;
    sol.status = (qp.beq.size() == 0 || qp.beq.isZero(0.0)) ? QpStatus::kOptimal : QpStatus::kInfeasible;
    return sol;
  }

  const int rows = static_cast<int>(qp.Aeq.rows() + 2 * qp.Aineq.rows());
  const int max_iter = settings.max_iterations > 0 ? settings.max_iterations : 10 * (n + rows) + 50;
  DualActiveSet solver(qp, collect_constraints(qp), max_iter);
  const QpStatus status = solver.run();
  sol.iterations = solver.iterations();
  if (status != QpStatus::kOptimal) {
    sol.status = status;
    return sol;
  }
  sol.z = solver.x();
  solver.fill_duals(sol.duals_eq, sol.duals_ineq);
  sol.objective = qp.objective(sol.z);
  sol.kkt_residual = kkt_residual(qp, sol);
  sol.status = sol.kkt_residual <= settings.tolerance * kkt_scale(qp, sol.z)
                   ? QpStatus::kOptimal
                   : QpStatus::kNumericalFailure;
  return sol;
}

double kkt_residual(const QuadProgram& qp, const QpSolution& solution) {
  validate_dimensions(qp);
  const Vector& z = solution.z;
  if (z.size() != qp.q.size()) throw Error(ErrorCode::kDimension, "solution has wrong length");
  const Vector lam = solution.duals_eq.size() == qp.Aeq.rows() ? solution.duals_eq
                                                                : Vector::Zero(qp.Aeq.rows());
  const Vector mu = solution.duals_ineq.size() == qp.Aineq.rows() ? solution.duals_ineq
                                                                   : Vector::Zero(qp.Aineq.rows());
  double res = 0.0;
  if (z.size() > 0) {
    const Vector grad = qp.P * z + qp.q - qp.Aeq.transpose() * lam - qp.Aineq.transpose() * mu;
    res = grad.lpNorm<Eigen::Infinity>();
  }
  if (qp.Aeq.rows() > 0) res = std::max(res, (qp.Aeq * z - qp.beq).lpNorm<Eigen::Infinity>());
  if (qp.Aineq.rows() > 0) {
    const Vector az = qp.Aineq * z;
    for (Eigen::Index i = 0; i < az.size(); ++i) {
      res = std::max({res, qp.lo[i] - az[i], az[i] - qp.hi[i]});
      if (mu[i] > 0.0) {
        res = std::max(res, std::isfinite(qp.lo[i]) ? mu[i] * std::abs(az[i] - qp.lo[i]) : kInf);
      } else if (mu[i] < 0.0) {
        res = std::max(res, std::isfinite(qp.hi[i]) ? -mu[i] * std::abs(az[i] - qp.hi[i]) : kInf);
      }
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Oracle

namespace {

struct Slab {
  Vector a;
  double lo = -kInf;
  double hi = kInf;
  double a_sq = 0.0;
};

Vector project_slab(const Slab& s, const Vector& w) {
  const double v = s.a.dot(w);
  const double c = std::clamp(v, s.lo, s.hi);
  if (c == v) return w;
  return w + ((c - v) / s.a_sq) * s.a;
}

// Dykstra's alternating projections onto the intersection of slabs.
Vector project_polytope(const std::vector<Slab>& slabs, const Vector& v) {
  if (slabs.empty()) return v;
  if (slabs.size() == 1) return project_slab(slabs[0], v);
  Vector x = v;
  std::vector<Vector> incr(slabs.size(), Vector::Zero(v.size()));
  for (int iter = 0; iter < 20000; ++iter) {
    // x can return to the same point after a sweep while the increments are
    // still moving, so both must settle.
    double moved = 0.0;
    for (std::size_t i = 0; i < slabs.size(); ++i) {
      const Vector y = x + incr[i];
      x = project_slab(slabs[i], y);
      const Vector next = y - x;
      moved = std::max(moved, (next - incr[i]).lpNorm<Eigen::Infinity>());
      incr[i] = next;
    }
    if (moved <= 1e-15 * (1.0 + x.lpNorm<Eigen::Infinity>())) break;
  }
  return x;
}

double max_violation(const std::vector<Slab>& slabs, const Vector& w) {
  double worst = 0.0;
  for (const Slab& s : slabs) {
    const double v = s.a.dot(w);
    worst = std::max({worst, s.lo - v, v - s.hi});
  }
  return worst;
}

}  // namespace

Vector brute_force(const QuadProgram& qp, int resolution) {
  validate_dimensions(qp);
  const int n = qp.num_variables();
  if (n > 4) throw Error(ErrorCode::kUnsupported, "brute_force supports at most 4 variables");
  if (resolution < 2) throw Error(ErrorCode::kInvalidArgument, "resolution must be >= 2");
  if (n == 0) return Vector(0);

  // z = z0 + N·w parametrizes the equality-feasible affine set.
  Vector z0 = Vector::Zero(n);
  Matrix N = Matrix::Identity(n, n);
  if (qp.Aeq.rows() > 0) {
    Eigen::JacobiSVD<Matrix> svd(qp.Aeq, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vector& sv = svd.singularValues();
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
      if (sv[i] > 1e-12 * sv[0]) ++rank;
    }
    svd.setThreshold(1e-12);
    z0 = svd.solve(qp.beq);
    if ((qp.Aeq * z0 - qp.beq).norm() > 1e-8 * (1.0 + qp.beq.norm())) {
      throw Error(ErrorCode::kInvalidArgument, "equality constraints are inconsistent");
    }
    N = svd.matrixV().rightCols(n - rank);
  }
  const int k = static_cast<int>(N.cols());
  if (k == 0) return z0;

  const Matrix Pr = N.transpose() * qp.P * N;
  const Vector gr = N.transpose() * (qp.P * z0 + qp.q);
  auto f = [&](const Vector& w) { return 0.5 * w.dot(Pr * w) + gr.dot(w); };

  std::vector<Slab> slabs;
  const Vector az0 = qp.Aineq * z0;
  for (Eigen::Index i = 0; i < qp.Aineq.rows(); ++i) {
    Slab s;
    s.a = N.transpose() * qp.Aineq.row(i).transpose();
    s.a_sq = s.a.squaredNorm();
    if (s.a_sq <= 1e-24) continue;
    s.lo = qp.lo[i] - az0[i];
    s.hi = qp.hi[i] - az0[i];
    slabs.push_back(std::move(s));
  }

  // Variable bounds from single-entry rows.
  Vector zlo = Vector::Constant(n, -kInf);
  Vector zhi = Vector::Constant(n, kInf);
  for (Eigen::Index i = 0; i < qp.Aineq.rows(); ++i) {
    int nz = 0;
    int col = -1;
    for (int j = 0; j < n; ++j) {
      if (qp.Aineq(i, j) != 0.0) {
        ++nz;
        col = j;
      }
    }
    if (nz != 1) continue;
    const double a = qp.Aineq(i, col);
    double l = qp.lo[i] / a;
    double h = qp.hi[i] / a;
    if (a < 0.0) std::swap(l, h);
    zlo[col] = std::max(zlo[col], l);
    zhi[col] = std::min(zhi[col], h);
  }

  Vector w = Vector::Zero(k);
  bool have_start = false;
  if (zlo.allFinite() && zhi.allFinite()) {
    const Vector center = 0.5 * (zlo + zhi);
    const Vector half = 0.5 * (zhi - zlo);
    const Vector wc = N.transpose() * (center - z0);
    const Vector radius = N.transpose().cwiseAbs() * half;
    double best = kInf;
    std::vector<int> idx(k, 0);
    Vector cand(k);
    const double feas_tol = 1e-12;
    while (true) {
      for (int d = 0; d < k; ++d) {
        cand[d] = wc[d] + radius[d] * (-1.0 + 2.0 * idx[d] / (resolution - 1));
      }
      if (max_violation(slabs, cand) <= feas_tol) {
        const double val = f(cand);
        if (val < best) {
          best = val;
          w = cand;
          have_start = true;
        }
      }
      int d = 0;
      while (d < k && ++idx[d] == resolution) idx[d++] = 0;
      if (d == k) break;
    }
    if (!have_start) w = wc;
  }
  w = project_polytope(slabs, w);

  // Accelerated projected gradient with adaptive restart.
  const double L = std::max(max_eigenvalue(Pr), 1e-300);
  const double step = 1.0 / L;
  Vector prev = w;
  double theta = 1.0;
  for (int iter = 0; iter < 100000; ++iter) {
    const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
    const Vector y = w + ((theta - 1.0) / theta_next) * (w - prev);
    const Vector next = project_polytope(slabs, y - step * (Pr * y + gr));
    if ((y - next).dot(next - w) > 0.0) {
      theta = 1.0;  // restart momentum
    } else {
      theta = theta_next;
    }
    prev = w;
    w = next;
    if ((w - prev).lpNorm<Eigen::Infinity>() <= 1e-15 * (1.0 + w.lpNorm<Eigen::Infinity>())) break;
  }

  // Polish: re-solve the equality QP on the faces that look active and keep
  // it if it is feasible and no worse.
  {
    std::vector<Vector> rows;
    std::vector<double> rhs;
    const double act_tol = 1e-7 * (1.0 + w.lpNorm<Eigen::Infinity>());
    for (const Slab& s : slabs) {
      const double v = s.a.dot(w);
      const double an = std::sqrt(s.a_sq);
      if (std::isfinite(s.lo) && std::abs(v - s.lo) <= act_tol * an) {
        rows.push_back(s.a);
        rhs.push_back(s.lo);
      } else if (std::isfinite(s.hi) && std::abs(v - s.hi) <= act_tol * an) {
        rows.push_back(s.a);
        rhs.push_back(s.hi);
      }
    }
    const int m = static_cast<int>(rows.size());
    Matrix kkt = Matrix::Zero(k + m, k + m);
    Vector b = Vector::Zero(k + m);
    kkt.topLeftCorner(k, k) = Pr;
    b.head(k) = -gr;
    for (int i = 0; i < m; ++i) {
      kkt.block(0, k + i, k, 1) = rows[i];
      kkt.block(k + i, 0, 1, k) = rows[i].transpose();
      b[k + i] = rhs[i];
    }
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(kkt);
    const Vector sol = cod.solve(b);
    const Vector wp = sol.head(k);
    if (wp.allFinite() && (kkt * sol - b).norm() <= 1e-9 * (1.0 + b.norm()) &&
        max_violation(slabs, wp) <= 1e-10 * (1.0 + wp.lpNorm<Eigen::Infinity>()) &&
        f(wp) <= f(w) + 1e-12 * (1.0 + std::abs(f(w)))) {
      w = wp;
    }
  }
  return z0 + N * w;
}

}  // namespace ihmpc
