#pragma once

#include <stdexcept>
#include <string>

namespace tulip {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension or layout mismatch between a network, a parameter vector and an input.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyper-parameters or inconsistent configuration files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Unreadable, missing or malformed files.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure of the gradient-flow integrator.
class IntegrationError : public Error {
 public:
  using Error::Error;
};

/// Kernel with zero spectral radius, for which the fluctuation bound is undefined.
class DegenerateKernelError : public Error {
 public:
  using Error::Error;
};

/// Input that violates a documented domain (empty datasets, non-simplex vectors...).
class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace tulip
