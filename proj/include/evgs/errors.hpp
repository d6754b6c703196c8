#pragma once

#include <stdexcept>
#include <string>

namespace evgs {

// Input bytes could not be decoded; message carries the position where known.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A value violates a documented domain invariant (polarity range, ordering, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration or unusable command line; the CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace evgs
