#pragma once

#include <stdexcept>
#include <string>

namespace tiltcrm {

// Exit-code families used by the command-line front end.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Requested tilted mean lies outside the open convex hull of the atom
/// locations (or needs |theta| beyond the tilting cap).
class MeanOutOfRange : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Ferguson-Klass inversion ran below the smallest representable weight.
class TruncationUnderflow : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace tiltcrm
