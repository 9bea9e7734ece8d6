#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sicwfi {

// Machine-readable error categories. The numeric value doubles as the CLI
// exit status, so existing values must never be renumbered.
enum class ErrorCode : int {
  invalid_geometry = 10,
  solver_budget = 11,
  no_mode = 12,
  axis_mismatch = 13,
  invalid_argument = 14,
  degenerate_stack = 20,
  unphysical_input = 21,
  invalid_tensor = 30,
  empty_table = 31,
  fit_failure = 40,
  no_peak = 41,
  label_mismatch = 42,
  degenerate_system = 43,
  rank_deficient = 44,
  reference_failure = 45,
  insufficient_data = 50,
  unidentifiable = 51,
  empty_channel = 52,
  parse_error = 60,
  io_error = 61,
  unknown_command = 62,
};

constexpr std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_geometry: return "invalid-geometry";
    case ErrorCode::solver_budget: return "solver-budget";
    case ErrorCode::no_mode: return "no-mode";
    case ErrorCode::axis_mismatch: return "axis-mismatch";
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::degenerate_stack: return "degenerate-stack";
    case ErrorCode::unphysical_input: return "unphysical-input";
    case ErrorCode::invalid_tensor: return "invalid-tensor";
    case ErrorCode::empty_table: return "empty-table";
    case ErrorCode::fit_failure: return "fit-failure";
    case ErrorCode::no_peak: return "no-peak";
    case ErrorCode::label_mismatch: return "label-mismatch";
    case ErrorCode::degenerate_system: return "degenerate-system";
    case ErrorCode::rank_deficient: return "rank-deficient";
    case ErrorCode::reference_failure: return "reference-failure";
    case ErrorCode::insufficient_data: return "insufficient-data";
    case ErrorCode::unidentifiable: return "unidentifiable";
    case ErrorCode::empty_channel: return "empty-channel";
    case ErrorCode::parse_error: return "parse-error";
    case ErrorCode::io_error: return "io-error";
    case ErrorCode::unknown_command: return "unknown-command";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view code_name() const noexcept { return error_code_name(code_); }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace sicwfi
