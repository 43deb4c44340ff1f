#pragma once

#include <stdexcept>
#include <string>

namespace crowdbias {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: malformed files, unknown names, violated preconditions.
class InputError : public Error {
 public:
  using Error::Error;
};

// A computation could not be carried out on otherwise well-formed input.
class ComputeError : public Error {
 public:
  using Error::Error;
};

}  // namespace crowdbias
