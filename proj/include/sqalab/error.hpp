#pragma once

#include <stdexcept>
#include <string>

namespace sqalab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInputError : public Error {
 public:
  using Error::Error;
};

/// Numerically degenerate input (zero variance, rank-0 data).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class CorruptFileError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

/// Failure of an external quality-label or codec command.
class ProviderError : public Error {
 public:
  ProviderError(const std::string& what, std::string captured = {})
      : Error(what), captured_(std::move(captured)) {}

  const std::string& captured_output() const { return captured_; }

 private:
  std::string captured_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace sqalab
