#pragma once

#include <stdexcept>
#include <string>

namespace mstr {

// Error taxonomy shared by all modules. Each maps to one failure class so
// callers (CLI, bindings) can translate them to exit codes or Python errors.

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CharsetError : Error {
  using Error::Error;
};

struct LengthError : Error {
  using Error::Error;
};

struct IndexError : Error {
  using Error::Error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct DomainError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct IOError : Error {
  using Error::Error;
};

}  // namespace mstr
