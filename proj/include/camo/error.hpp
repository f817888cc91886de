#pragma once

#include <stdexcept>
#include <string>

namespace camo {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shape or axis mismatch.
struct DimError : Error {
  using Error::Error;
};

// Parameter outside its legal range (alpha, scale, thresholds, ...).
struct ParamError : Error {
  using Error::Error;
};

// API misuse: non-scalar backward, empty dataset, untrained weights.
struct UsageError : Error {
  using Error::Error;
};

// Missing, unreadable or corrupt files.
struct IoError : Error {
  using Error::Error;
};

// Malformed config or CSV content; message carries the line number.
struct ParseError : Error {
  using Error::Error;
};

}  // namespace camo
