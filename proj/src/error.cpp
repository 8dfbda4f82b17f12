#include "rftval/error.hpp"

namespace rftval {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::degenerate_design: return "degenerate_design";
    case ErrorKind::insufficient_data: return "insufficient_data";
    case ErrorKind::degenerate_variance: return "degenerate_variance";
    case ErrorKind::degenerate_smoothness: return "degenerate_smoothness";
    case ErrorKind::numeric_failure: return "numeric_failure";
    case ErrorKind::out_of_regime: return "out_of_regime";
    case ErrorKind::incomplete_context: return "incomplete_context";
    case ErrorKind::config_error: return "config_error";
    case ErrorKind::io_error: return "io_error";
  }
  return "unknown";
}

}  // namespace rftval
