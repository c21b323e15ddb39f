#pragma once

#include <stdexcept>
#include <string>

namespace edidub {

/// Invalid argument values or shapes supplied by a caller.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A component broke its documented contract (e.g. a denoiser returned the
/// wrong shape).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Bad input data, e.g. a batch item whose mask selects nothing.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateMaskError : public DataError {
 public:
  DegenerateMaskError() : DataError("mask selects no elements (empty editable region)") {}
};

/// Unusable configuration: missing files, unknown presets, inconsistent fields.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ArgumentError(what);
}

}  // namespace edidub
