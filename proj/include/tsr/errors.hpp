// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace tsr {

/// Caller broke a documented precondition (shape mismatch, bad index, ...).
class ContractViolation : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// Invalid run or refresh configuration, detected before any step runs.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values appeared during a run (e.g. NaN loss).
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& what) {
  if (!condition) {
    throw ContractViolation(what);
  }
}

}  // namespace tsr
