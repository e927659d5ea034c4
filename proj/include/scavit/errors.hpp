#pragma once

#include <stdexcept>
#include <string>

namespace scavit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible with the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An argument is outside the operation's domain (bad index, probability, ...).
class ValueError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Raised when the training loss becomes NaN or infinite.
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

}  // namespace scavit
