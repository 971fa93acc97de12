#pragma once

#include <stdexcept>
#include <string>

namespace msf {

// Base class for every error raised by the library. `kind()` is a stable
// lowercase tag used in machine-parsable CLI diagnostics.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

// A caller broke an operation's precondition (shape mismatch, missing state).
class ContractError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "contract"; }
};

// An invalid configuration value (odd spatial size, bad channel width, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

// Malformed, truncated or out-of-range input data.
class DataError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "data"; }
};

// File system failures.
class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

// Optimization diverged (NaN/Inf loss).
class TrainingError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "training"; }
};

}  // namespace msf
