#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ihmpc {

enum class ErrorCode {
  kDimension,
  kUnstableModel,
  kDomain,
  kRankTolerance,
  kInfeasibleReference,
  kInsufficientSamples,
  kStateMismatch,
  kNotApplicable,
  kInfeasibleCandidate,
  kSolverFailure,
  kCertificate,
  kUnsupported,
  kInvalidArgument,
  kIo,
};

std::string_view to_string(ErrorCode code);

/// Exception type thrown by every ihmpc module. The code identifies the
/// failure class so callers can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ihmpc
