#pragma once

#include <stdexcept>
#include <string>

namespace unloadrl {

// Base of every error raised by the library. Each subtype maps to one of the
// named failure modes of the public operations.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GenerationFailure : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class UnknownItem : public Error {
 public:
  using Error::Error;
};

class DeadItem : public Error {
 public:
  using Error::Error;
};

// Raised when a removal would leave a live item without support.
class SupportViolation : public Error {
 public:
  using Error::Error;
};

class TooFewItems : public Error {
 public:
  using Error::Error;
};

class OutOfBounds : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class StaleTrace : public Error {
 public:
  using Error::Error;
};

class AllMasked : public Error {
 public:
  using Error::Error;
};

class BufferTooSmall : public Error {
 public:
  using Error::Error;
};

class MissingNextObs : public Error {
 public:
  using Error::Error;
};

class EpisodeDone : public Error {
 public:
  using Error::Error;
};

class InvalidAction : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A CSV whose header does not match what the consumer expects.
class SchemaMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace unloadrl
