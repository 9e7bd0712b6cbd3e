// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace isps {

/// Negative arguments, empty ranges and similar out-of-domain inputs.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Operation requested on an incompatible comparison-function class.
class ClassError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Sampled data violates a structural requirement (monotonicity, sign).
class DataError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A grid does not cover the stencil an operation needs.
class ExtentError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Dimension mismatch between states, sets or signals.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Caller contract violated (budget 0, non-increasing sample, ...).
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid run configuration, unknown names, missing prerequisite tables.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Estimates that contradict each other beyond the declared slack.
class ConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// The divergence guard of a numerical flow tripped.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(double time, double norm)
      : std::runtime_error("state norm " + std::to_string(norm) +
                           " exceeded the divergence guard at t=" +
                           std::to_string(time)),
        time_(time),
        norm_(norm) {}

  double time() const noexcept { return time_; }
  double norm() const noexcept { return norm_; }

 private:
  double time_;
  double norm_;
};

}  // namespace isps
