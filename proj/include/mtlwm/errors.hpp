#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mtlwm {

// Every error raised by the library derives from Error so callers (the CLI in
// particular) can map families of failures onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid parameters or inconsistent configuration documents.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Shapes or dimensions that do not chain.
class StructuralError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, std::ptrdiff_t layer)
      : Error(what + " (layer " + std::to_string(layer) + ")"), layer_(layer) {}
  std::ptrdiff_t layer() const noexcept { return layer_; }

 private:
  std::ptrdiff_t layer_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " at position " + std::to_string(position)), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

// An operation was invoked before its prerequisites exist (e.g. no clean anchor).
class StateError : public Error {
 public:
  using Error::Error;
};

// Watermark head and model backbone cannot be combined into a branch.
class VerificationError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class AttackError : public Error {
 public:
  using Error::Error;
};

class CryptoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mtlwm
