#pragma once

#include <stdexcept>
#include <string>

namespace fmr {

/// Base class for all errors raised by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// se3
struct AngleNearPi : Error {
  using Error::Error;
};

// cloud / io
struct DegenerateExtent : Error {
  using Error::Error;
};
struct EmptyResult : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct UnsupportedElement : Error {
  using Error::Error;
};

/// Parse failure with a 1-based line number.
struct ParseError : Error {
  int line;
  ParseError(int line_no, const std::string& reason)
      : Error("line " + std::to_string(line_no) + ": " + reason),
        line(line_no) {}
};

// tinynet
struct ShapeMismatch : Error {
  using Error::Error;
};
struct BadMagic : Error {
  using Error::Error;
};
struct VersionMismatch : Error {
  using Error::Error;
};
struct ChecksumMismatch : Error {
  using Error::Error;
};

// losses
struct ModeMismatch : Error {
  using Error::Error;
};

// registration
struct SingularNormalEquations : Error {
  using Error::Error;
};
struct DegenerateCloud : Error {
  using Error::Error;
};
struct DegenerateConfiguration : Error {
  using Error::Error;
};

// training
struct NonFiniteLoss : Error {
  long step;
  NonFiniteLoss(long step_index, const std::string& what)
      : Error("non-finite loss at step " + std::to_string(step_index) + ": " +
              what),
        step(step_index) {}
};

struct InvalidArgument : Error {
  using Error::Error;
};

}  // namespace fmr
