#pragma once

#include <stdexcept>
#include <string>

namespace zigam {

// Error categories surfaced by the library. The CLI maps them to the "kind"
// field of its machine-readable error report.
enum class ErrorKind {
  Config,
  Data,
  Parse,
  Schema,
  Shape,
  State,
  Usage,
  Numerical,
  Convergence,
  Inference,
  Io,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Data: return "data";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::State: return "state";
    case ErrorKind::Usage: return "usage";
    case ErrorKind::Numerical: return "numerical";
    case ErrorKind::Convergence: return "convergence";
    case ErrorKind::Inference: return "inference";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace zigam
