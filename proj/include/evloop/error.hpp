#pragma once

#include <stdexcept>
#include <string>

#include "evloop/config.hpp"

EVLOOP_NAMESPACE_BEGIN

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or image dimensions do not agree with what an operation expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN/Inf appeared, or an optimisation diverged.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A named layer, method or key does not exist.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// A forward cache was used after the network it came from changed.
class InvalidCacheError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Input data is malformed, missing, or inadequate (corrupt files, single-class
/// datasets, degenerate statistics).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A statistic is mathematically undefined for the given input.
class DegenerateError : public DataError {
 public:
  using DataError::DataError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

EVLOOP_NAMESPACE_END
