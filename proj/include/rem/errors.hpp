#pragma once

#include <stdexcept>
#include <string>

namespace rem {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Vector or table length does not match the operator or domain it is used with.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed clique: out-of-range attribute index, unsorted, or duplicate entries.
class CliqueError : public Error {
 public:
  using Error::Error;
};

// A dense materialization or explicit data vector would exceed its size guard.
class GuardError : public Error {
 public:
  using Error::Error;
};

// Privacy budget would be exceeded; raised before any noise is sampled.
class BudgetError : public Error {
 public:
  using Error::Error;
};

// Bad input file: CSV, domain JSON, or measurement archive.
class IngestError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration (negative variance, bad round count, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Numeric failure: non-finite values or a solver that cannot proceed.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace rem
