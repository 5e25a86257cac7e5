#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pinnflow {

enum class ErrorCode {
  invalid_architecture,
  non_finite_input,
  evaluation_overflow,
  gradient_unavailable,
  empty_sample,
  out_of_domain,
  configuration,
  partition,
  insufficient_derivative_order,
  empty_target,
  degenerate_loss,
  step_rejected,
  not_a_descent_direction,
  divergence,
  consistency,
  checkpoint_incompatible,
  parse,
  io,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, std::string(to_string(code)) + ": " + message);
}

}  // namespace pinnflow
