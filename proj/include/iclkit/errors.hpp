#pragma once

#include <stdexcept>
#include <string>

namespace iclkit {

// All toolkit failures derive from Error so callers can separate them from
// programming errors (std::logic_error and friends).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed bytes in a tensor container.
class FormatError : public Error {
 public:
  using Error::Error;
};

// A run directory file is missing or unreadable.
class LoadError : public Error {
 public:
  using Error::Error;
};

// Files load individually but disagree with each other.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

// Arguments outside a function's mathematical domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Dataset content is missing something an operation needs.
class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace iclkit
