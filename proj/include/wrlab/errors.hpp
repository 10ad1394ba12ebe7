#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace wrlab {

/// Raised when an argument violates an operation's precondition.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A declared density bound was exceeded while thinning.
class SupBoundViolation : public std::runtime_error {
 public:
  SupBoundViolation(double value, double bound)
      : std::runtime_error("density " + std::to_string(value) + " exceeds declared sup_bound " +
                           std::to_string(bound)),
        value_(value),
        bound_(bound) {}
  double value() const { return value_; }
  double bound() const { return bound_; }

 private:
  double value_;
  double bound_;
};

/// Rejection sampler ran out of attempts.
class RejectionExhausted : public std::runtime_error {
 public:
  RejectionExhausted(std::uint64_t attempts, std::uint64_t accepted)
      : std::runtime_error("rejection sampler exhausted " + std::to_string(attempts) +
                           " attempts (acceptance rate " +
                           std::to_string(attempts ? double(accepted) / double(attempts) : 0.0) + ")"),
        attempts_(attempts),
        accepted_(accepted) {}
  std::uint64_t attempts() const { return attempts_; }
  double acceptance_rate() const { return attempts_ ? double(accepted_) / double(attempts_) : 0.0; }

 private:
  std::uint64_t attempts_;
  std::uint64_t accepted_;
};

/// MCMC convergence diagnostics failed in strict mode.
class DiagnosticsFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace wrlab
