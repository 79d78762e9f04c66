#pragma once

#include <stdexcept>
#include <string>

namespace ctxf {

// Root of every error raised by the library. Subclasses mirror the failure
// categories the pipeline reports on.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class TypeError : public Error {
 public:
  using Error::Error;
};

class TransformError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class FeatureError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class QueryError : public Error {
 public:
  using Error::Error;
};

/// Fewer correspondences than an affine model needs.
class RegistrationInfeasible : public Error {
 public:
  using Error::Error;
};

/// Every minimal sample drawn was collinear.
class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

/// No retrieved candidate is usable as context for the probe.
class NoContextError : public Error {
 public:
  using Error::Error;
};

class ComparatorError : public Error {
 public:
  using Error::Error;
};

class EvaluationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace ctxf
