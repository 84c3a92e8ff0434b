#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ihmpc/certificates.hpp"
#include "ihmpc/error.hpp"
#include "ihmpc/simulator.hpp"

namespace ihmpc {

/// A scenario document describes one closed-loop experiment. See
/// docs in README.md for the schema.
struct Scenario {
  ControllerKind controller = ControllerKind::kSetpoint;

  // Model: either explicit matrices or D0 plus a mode list.
  bool model_from_modes = false;
  Matrix D0;
  Matrix F;
  Matrix Dd;
  Matrix Psi;
  std::vector<Mode> modes;

  int horizon = 1;

  // set-point weights
  Matrix Q;
  // zone weights
  Matrix Qy;
  Matrix Qu;
  Matrix Sy;
  // shared
  Matrix R;
  /// Explicit S (set-point) or Su (zone); empty when "auto".
  std::optional<Matrix> slack_weight;

  Rectangle U;
  Rectangle dU;
  std::optional<Rectangle> Y;

  Vector reference;  // set-point
  Vector target;     // zone
  std::optional<PlantState> initial_state;

  int steps = 100;
  AnalysisTolerances tolerances;
  CertificateOptions certificate;

  OpomModel model() const;
};

/// Reading and validation failure. errors() lists every violation found.
class ScenarioError : public Error {
 public:
  explicit ScenarioError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::filesystem::path& path);
std::string scenario_to_string(const Scenario& scenario);
void write_scenario(const Scenario& scenario, const std::filesystem::path& path);

/// Scenario resolved into a controller spec; "auto" slack weights are
/// computed by the certificate pipeline.
struct ResolvedScenario {
  ControllerSpec spec;
  CertificateBundle certificates;
  PlantState initial_state;
};

ResolvedScenario resolve(const Scenario& scenario);

/// CSV: k,V_star,kkt_residual,y_*,u_*,du_*, then delta_* (set-point) or
/// y_sp_*,delta_y_*,delta_u_* (zone), then plan_<j>_<i> for moves j >= 1.
std::string trace_csv_header(const ControllerSpec& spec);
std::string trace_to_csv(const ClosedLoopTrace& trace);
void write_trace(const ClosedLoopTrace& trace, const std::filesystem::path& path);

/// Rebuild a trace from CSV by replaying the recorded plans through the plant
/// from initial_state.
ClosedLoopTrace read_trace(const std::filesystem::path& path, const ControllerSpec& spec,
                           const PlantState& initial_state);
ClosedLoopTrace parse_trace_csv(const std::string& text, const ControllerSpec& spec,
                                const PlantState& initial_state);

std::string certificates_to_string(const CertificateBundle& bundle);
CertificateBundle parse_certificates(const std::string& text);
void write_certificates(const CertificateBundle& bundle, const std::filesystem::path& path);
CertificateBundle read_certificates(const std::filesystem::path& path);

std::string format_double(double v);

}  // namespace ihmpc
