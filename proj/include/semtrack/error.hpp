#pragma once

#include <stdexcept>
#include <string>

namespace semtrack {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or parameter extents do not agree with a layer contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Rejection sampling exhausted its attempt budget.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

// Malformed or unreadable file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace semtrack
