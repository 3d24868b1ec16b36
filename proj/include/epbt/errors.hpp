#pragma once

#include <stdexcept>
#include <string>

namespace epbt {

// Bad arguments to a pure function (length mismatch, non-finite values).
class InputError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// Invalid configuration, rejected before any work starts.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Operation called on an object in the wrong state (e.g. missing behavior).
class StateError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

class LookupError : public std::out_of_range {
public:
  using std::out_of_range::out_of_range;
};

// Malformed file contents. Messages carry the file position when known.
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace epbt
