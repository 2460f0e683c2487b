#pragma once

#include <stdexcept>
#include <string>

namespace tss {

/// Base of every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input from the caller: missing files, malformed manifests or
/// configs, incompatible checkpoints. The CLI maps these to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Failure while doing the work itself (I/O on outputs, encoder errors,
/// diverging training). The CLI maps these to exit code 3.
class RuntimeFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace tss
