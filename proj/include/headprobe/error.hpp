#pragma once

#include <stdexcept>
#include <string>

namespace headprobe {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing, unreadable, or corrupt input file.
class LoadError : public Error {
 public:
  using Error::Error;
};

// Tensor shape or config inconsistency.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Non-finite activations, zero-norm embeddings.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Constant regressors, zero-variance samples.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class AlignmentError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NetworkError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class IntegrityError : public Error {
 public:
  using Error::Error;
};

}  // namespace headprobe
