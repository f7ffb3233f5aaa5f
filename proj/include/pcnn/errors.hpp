#pragma once

#include <stdexcept>
#include <string>

namespace pcnn {

/// Base class for every error raised by the simulator.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Physical or configuration parameter outside its valid range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A requested quantity has no solution (e.g. no coupling constant for a finesse).
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// Shapes or lengths of inputs do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input value outside the representable range (e.g. pixel outside [0, 1]).
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Index or time position falls outside a signal.
class BoundsError : public Error {
 public:
  using Error::Error;
};

/// Value not present on a discrete grid.
class LookupError : public Error {
 public:
  using Error::Error;
};

class RegionNotFoundError : public Error {
 public:
  using Error::Error;
};

/// Weight that no transmission in [0, 1] can represent (negative or non-finite).
class UnmappableWeightError : public Error {
 public:
  using Error::Error;
};

class UnsupportedGeometryError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable input file.
class FormatError : public Error {
 public:
  using Error::Error;
};

class TrainingFailedError : public Error {
 public:
  using Error::Error;
};

}  // namespace pcnn
