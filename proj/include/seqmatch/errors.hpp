#pragma once

#include <stdexcept>
#include <string>

namespace seqmatch {

// Base for every error the library throws. The CLI maps subclasses onto
// exit codes (usage/config = 1, data/format = 2, numerical = 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class LookupError : public InputError {
 public:
  using InputError::InputError;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace seqmatch
