#pragma once

#include <stdexcept>
#include <string>

namespace pfsel {

// Base for everything this library throws on purpose.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Malformed input files (trace CSV, workload spec, model containers, ...).
class ParseError : public Error {
public:
  using Error::Error;
};

// Structurally valid input that violates a contract (k > distinct points,
// empty training set, no eligible config for a phase, ...).
class DataError : public Error {
public:
  using Error::Error;
};

}  // namespace pfsel
