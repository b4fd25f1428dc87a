#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace prefopt {

enum class ErrorKind {
  Input,           // malformed arguments, dimension mismatch, out-of-domain points
  State,           // operation not valid in the current state machine state
  Fit,             // Newton iterations did not converge
  Numerical,       // factorization failure beyond jitter
  Consistency,     // contradictory satisfaction for a known point
  Initialization,  // no feasible point in the initial comparison
  NotFound,
  Conflict,
  Schema,
  Io,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised when the Laplace mode search exhausts its iteration budget.
class FitError : public Error {
 public:
  FitError(const std::string& what, double gradient_norm)
      : Error(ErrorKind::Fit, what), gradient_norm_(gradient_norm) {}

  double gradient_norm() const noexcept { return gradient_norm_; }

 private:
  double gradient_norm_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace prefopt
