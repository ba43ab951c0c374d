#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qmeas {

/// Stable failure categories. The CLI maps these onto exit codes and the
/// "error" field of its JSON error payload.
enum class ErrorCode {
  invalid_argument,
  grid_mismatch,
  zero_norm,
  not_normalized,
  non_symmetric_operator,
  inconsistent_channel_output,
  domain_too_small,
  k_max_too_small,
  no_convergence,
  config_error,
  io_error,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::grid_mismatch: return "grid-mismatch";
    case ErrorCode::zero_norm: return "zero-norm";
    case ErrorCode::not_normalized: return "not-normalized";
    case ErrorCode::non_symmetric_operator: return "non-symmetric-operator";
    case ErrorCode::inconsistent_channel_output: return "inconsistent-channel-output";
    case ErrorCode::domain_too_small: return "domain-too-small";
    case ErrorCode::k_max_too_small: return "k-max-too-small";
    case ErrorCode::no_convergence: return "no-convergence";
    case ErrorCode::config_error: return "config-error";
    case ErrorCode::io_error: return "io-error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace qmeas
