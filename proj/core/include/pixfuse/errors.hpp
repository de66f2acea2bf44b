#pragma once

#include <stdexcept>
#include <string>

namespace pixfuse {

// Base of every error the library raises. The CLI maps ConfigError (and its
// validation relatives) to exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or arguments, detected before data is touched.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed scene directory, manifest or checkpoint.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Tensor shape does not satisfy an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Zero-norm vectors, NaN losses and similar numerical breakdowns.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Not enough positives/negatives to form a contrastive batch.
class DegenerateBatchError : public Error {
 public:
  using Error::Error;
};

class PipelineError : public Error {
 public:
  using Error::Error;
};

class EvalError : public Error {
 public:
  using Error::Error;
};

}  // namespace pixfuse
