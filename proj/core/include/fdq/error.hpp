#pragma once

#include <stdexcept>
#include <string>

namespace fdq {

// Every error raised by the library derives from Error so callers can map
// failures onto exit codes without knowing the concrete type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or gradient during training.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

// Exhaustive search refused because the space is too large.
class GuardError : public Error {
 public:
  using Error::Error;
};

// A partial-target backward ensemble has no model for the requested bucket.
class MissingModelError : public Error {
 public:
  using Error::Error;
};

}  // namespace fdq
