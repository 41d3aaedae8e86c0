#pragma once

#include <stdexcept>
#include <string>

namespace vipatch {

// Root of every error the library raises. The CLI maps each subclass to a
// distinct exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes or channel counts of two operands disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A patch center or radius falls outside the feasible region.
class FeasibilityError : public Error {
 public:
  using Error::Error;
};

// Unsupported or corrupt image file.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// The remote model answered with something that violates the wire format.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// The target model failed to produce an output.
class OracleError : public Error {
 public:
  using Error::Error;
};

// Remote request timed out. Retryable: the caller may resubmit.
class TimeoutError : public OracleError {
 public:
  using OracleError::OracleError;
};

}  // namespace vipatch
