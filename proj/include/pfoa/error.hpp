#pragma once

#include <stdexcept>
#include <string>

namespace pfoa {

// Base for every error raised by the pipeline.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input violates a documented precondition or domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed file content; message names the row and column.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Tensor or schema dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace pfoa
