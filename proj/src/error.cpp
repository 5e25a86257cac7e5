#include "pinnflow/error.hpp"

namespace pinnflow {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_architecture: return "invalid architecture";
    case ErrorCode::non_finite_input: return "non-finite input";
    case ErrorCode::evaluation_overflow: return "evaluation overflow";
    case ErrorCode::gradient_unavailable: return "gradient unavailable";
    case ErrorCode::empty_sample: return "empty sample";
    case ErrorCode::out_of_domain: return "out of domain";
    case ErrorCode::configuration: return "configuration error";
    case ErrorCode::partition: return "partition error";
    case ErrorCode::insufficient_derivative_order: return "insufficient derivative order";
    case ErrorCode::empty_target: return "empty target";
    case ErrorCode::degenerate_loss: return "degenerate loss";
    case ErrorCode::step_rejected: return "step rejected";
    case ErrorCode::not_a_descent_direction: return "not a descent direction";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::consistency: return "consistency error";
    case ErrorCode::checkpoint_incompatible: return "checkpoint incompatible";
    case ErrorCode::parse: return "parse error";
    case ErrorCode::io: return "i/o error";
  }
  return "error";
}

}  // namespace pinnflow
