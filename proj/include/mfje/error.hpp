#pragma once

#include <stdexcept>
#include <string>

namespace mfje {

// Base for every error raised by the engine. The module name is prefixed to
// the message so diagnostics surfaced through the C API stay attributable.
class Error : public std::runtime_error {
 public:
  Error(const std::string& module, const std::string& what)
      : std::runtime_error(module + ": " + what), module_(module) {}
  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A kernel evaluated above its declared rate bound C_lambda.
class BoundViolation : public Error {
 public:
  using Error::Error;
};

// Forward solver step too coarse for the declared rate bound.
class StabilityError : public Error {
 public:
  using Error::Error;
};

// Picard iterates moved apart for several consecutive rounds.
class NonContraction : public Error {
 public:
  using Error::Error;
};

// Malformed or out-of-range experiment configuration.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

}  // namespace mfje
