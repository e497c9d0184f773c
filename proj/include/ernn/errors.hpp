#pragma once

#include <stdexcept>
#include <string>

namespace ernn {

/// Shapes of operands do not agree.
class DimensionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed file, unknown label, ragged sequences, bad checkpoint header.
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A NaN or Inf showed up during a solve or a training step.
class DivergenceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Singular or otherwise unusable linear system.
class SingularMatrixError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace ernn
