#pragma once

#include <stdexcept>
#include <string>

namespace rftval {

enum class ErrorKind {
  invalid_argument,
  degenerate_design,
  insufficient_data,
  degenerate_variance,
  degenerate_smoothness,
  numeric_failure,
  out_of_regime,
  incomplete_context,
  config_error,
  io_error,
};

const char* to_string(ErrorKind kind) noexcept;

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, const std::string& what) {
  if (!condition) fail(ErrorKind::invalid_argument, what);
}

}  // namespace rftval
