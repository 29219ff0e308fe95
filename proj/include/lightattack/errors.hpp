#pragma once

#include <stdexcept>
#include <string>

namespace lightattack {

// Argument/precondition violations use std::invalid_argument directly.

/// Malformed or truncated file contents.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Connection failure or timeout; also the base of local I/O failures.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Local file I/O failure.
class IoError : public TransportError {
 public:
  using TransportError::TransportError;
};

/// A peer answered, but the answer does not follow the wire protocol.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Semantically invalid input data (duplicate labels, unknown schema version, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The search distribution could not be repaired into a factorizable state.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every member of a population produced a non-finite fitness.
class InvalidPopulation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lightattack
