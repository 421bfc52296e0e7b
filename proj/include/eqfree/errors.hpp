#pragma once

#include <stdexcept>
#include <string>

namespace eqfree {

/// Adaptive integrator could not make progress (step-size underflow or
/// too many consecutive rejected steps). Carries the time reached.
class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& what, double t_reached)
      : std::runtime_error(what + " (time reached: " + std::to_string(t_reached) + ")"),
        t_reached_(t_reached) {}

  double time_reached() const noexcept { return t_reached_; }

 private:
  double t_reached_;
};

/// A profile lies so far outside the dataset that every kernel weight
/// underflows; the Nystrom extension is undefined there.
class OutOfSupportError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Degenerate input data (e.g. all pairwise distances zero).
class DegenerateDataError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// File could not be read or parsed.
class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// File parsed but its declared shape/version does not match expectations.
class SchemaError : public IoError {
  using IoError::IoError;
};

/// Invalid run configuration (bad value or unknown key).
class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace eqfree
