#include "compare.hpp"

#include <bit>
#include <cstdint>

namespace ihmpc::testkit {

namespace {

bool same(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

bool same(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (!same(a.data()[i], b.data()[i])) return false;
  }
  return true;
}

bool same(const Rectangle& a, const Rectangle& b) { return same(a.lo(), b.lo()) && same(a.hi(), b.hi()); }

bool same(const std::complex<double>& a, const std::complex<double>& b) {
  return same(a.real(), b.real()) && same(a.imag(), b.imag());
}

}  // namespace

std::string first_difference(const Scenario& a, const Scenario& b) {
  if (a.controller != b.controller) return "controller";
  if (a.model_from_modes != b.model_from_modes) return "model_from_modes";
  if (!same(a.D0, b.D0)) return "D0";
  if (!same(a.F, b.F)) return "F";
  if (!same(a.Dd, b.Dd)) return "Dd";
  if (!same(a.Psi, b.Psi)) return "Psi";
  if (a.modes.size() != b.modes.size()) return "modes";
  for (std::size_t i = 0; i < a.modes.size(); ++i) {
    const Mode& x = a.modes[i];
    const Mode& y = b.modes[i];
    if (!same(x.pole, y.pole) || !same(x.residue, y.residue) || x.output_index != y.output_index ||
        x.input_index != y.input_index) {
      return "modes[" + std::to_string(i) + "]";
    }
  }
  if (a.horizon != b.horizon) return "horizon";
  if (!same(a.Q, b.Q)) return "Q";
  if (!same(a.Qy, b.Qy)) return "Qy";
  if (!same(a.Qu, b.Qu)) return "Qu";
  if (!same(a.Sy, b.Sy)) return "Sy";
  if (!same(a.R, b.R)) return "R";
  if (a.slack_weight.has_value() != b.slack_weight.has_value()) return "slack_weight";
  if (a.slack_weight && !same(*a.slack_weight, *b.slack_weight)) return "slack_weight";
  if (!same(a.U, b.U)) return "U";
  if (!same(a.dU, b.dU)) return "dU";
  if (a.Y.has_value() != b.Y.has_value()) return "Y";
  if (a.Y && !same(*a.Y, *b.Y)) return "Y";
  if (!same(a.reference, b.reference)) return "reference";
  if (!same(a.target, b.target)) return "target";
  if (a.initial_state.has_value() != b.initial_state.has_value()) return "initial_state";
  if (a.initial_state) {
    const PlantState& x = *a.initial_state;
    const PlantState& y = *b.initial_state;
    if (!same(x.xs, y.xs) || !same(x.xd, y.xd) || !same(x.u, y.u)) return "initial_state";
  }
  if (a.steps != b.steps) return "steps";
  const AnalysisTolerances& t = a.tolerances;
  const AnalysisTolerances& u = b.tolerances;
  if (!same(t.monotone, u.monotone) || !same(t.identity, u.identity) || !same(t.bound, u.bound) ||
      !same(t.converge, u.converge) || !same(t.limit, u.limit) || !same(t.target, u.target) ||
      !same(t.consistency, u.consistency)) {
    return "tolerances";
  }
  const CertificateOptions& c = a.certificate;
  const CertificateOptions& d = b.certificate;
  if (!same(c.rank_tol, d.rank_tol) || !same(c.margin, d.margin) || !same(c.su_shift, d.su_shift) ||
      c.phi.n_samples != d.phi.n_samples || !same(c.phi.safety, d.phi.safety) ||
      c.phi.seed != d.phi.seed) {
    return "certificate";
  }
  if (c.beta_override.has_value() != d.beta_override.has_value() ||
      (c.beta_override && !same(*c.beta_override, *d.beta_override))) {
    return "certificate.beta";
  }
  if (c.phi_override.has_value() != d.phi_override.has_value() ||
      (c.phi_override && !same(*c.phi_override, *d.phi_override))) {
    return "certificate.phi";
  }
  return {};
}

}  // namespace ihmpc::testkit
