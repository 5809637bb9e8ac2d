#pragma once

#include <stdexcept>
#include <string>

namespace onfire {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition (shapes, ranges, arguments).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Non-finite values entered or left a numeric primitive.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Operation called in the wrong object state (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

// Graph failed structural or static shape validation.
class GraphError : public Error {
 public:
  using Error::Error;
};

// Named entity not found; the message lists the valid names.
class LookupError : public Error {
 public:
  using Error::Error;
};

// Binary file does not follow its declared format.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(int line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

}  // namespace onfire
