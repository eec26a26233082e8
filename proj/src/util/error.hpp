#pragma once

#include <stdexcept>
#include <string>

namespace forge {

// Base of every error the core raises. The C API maps each subclass onto a
// status code; see forge.h.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

// Raised when a sequence cannot be compiled from an otherwise parseable record.
class CompileError : public Error {
 public:
  using Error::Error;
};

class ClientError : public Error {
 public:
  using Error::Error;
};

class NoReferenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace forge
