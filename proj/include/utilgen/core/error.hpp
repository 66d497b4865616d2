#pragma once

#include <stdexcept>
#include <string>

namespace utilgen {

// Bad argument values or inconsistent inputs (weights outside [0,1], non-finite losses, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Misconfigured pipeline stages: missing tokens, empty splits, bad guidance ordering.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical breakdown that the caller cannot recover from (e.g. singular Hessian).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Warnings go to stderr unless silenced; tests silence them.
void warn(const std::string& message);
void set_warnings_enabled(bool enabled);
int warning_count();

}  // namespace utilgen
