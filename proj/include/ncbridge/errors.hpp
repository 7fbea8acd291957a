#pragma once

#include <stdexcept>
#include <string>

namespace ncbridge {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller-side precondition was violated (bad shape, bad option, bad name).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Input files could not be read or parsed.
class DataError : public Error {
 public:
  using Error::Error;
};

/// The data do not support the requested estimate. Parent of all
/// identification, rank and convergence failures.
class StatisticalError : public Error {
 public:
  using Error::Error;
};

class RankDeficientError : public StatisticalError {
 public:
  using StatisticalError::StatisticalError;
};

class IdentificationError : public StatisticalError {
 public:
  using StatisticalError::StatisticalError;
};

class WeakInstrumentError : public IdentificationError {
 public:
  using IdentificationError::IdentificationError;
};

class SeparationError : public StatisticalError {
 public:
  using StatisticalError::StatisticalError;
};

class SingleClassError : public StatisticalError {
 public:
  using StatisticalError::StatisticalError;
};

}  // namespace ncbridge
