#pragma once

#include <stdexcept>
#include <string>

namespace splatstyle {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unreadable input file.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// Configuration or argument that violates a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or a degenerate linear system.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage was started before its upstream artifacts exist or
/// after they changed.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

}  // namespace splatstyle
