#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ihmpc {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `ihmpc` tool. args excludes the program name.
///
///   simulate <scenario> [--out trace.csv] [--steps N]
///   certify  <scenario> [--out cert.json]
///   check    <trace.csv> <scenario> [--tol-monotone x] [--tol-converge x] ...
///   qp-verify [--instances N] [--seed S]
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ihmpc
