#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tsf {

/// Failure categories shared by every module. The CLI maps them onto exit codes.
enum class ErrorKind {
  dimension,   // shape / arity mismatch
  parameter,   // argument outside its domain
  contract,    // precondition on call order or inputs violated
  length,      // series or window too short
  schema,      // file layout or dataset layout invalid
  row,         // a single input row is malformed
  validation,  // semantic check over a whole input failed
  numeric,     // an operation would produce NaN/Inf
  degenerate,  // scaler with max == min
  capability,  // request beyond what a model was trained for
  convergence, // optimizer budget exhausted
  divergence,  // training loss became non-finite
  config,      // run configuration invalid
  io,
};

constexpr std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::contract: return "contract";
    case ErrorKind::length: return "length";
    case ErrorKind::schema: return "schema";
    case ErrorKind::row: return "row";
    case ErrorKind::validation: return "validation";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::capability: return "capability";
    case ErrorKind::convergence: return "convergence";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace tsf
