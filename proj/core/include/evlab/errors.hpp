#pragma once

#include <stdexcept>
#include <string>

namespace evlab {

/// Shapes or lengths that do not agree with an operation's contract.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A call that is well-formed but not permitted (bad arguments, wrong state).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed EEG input. The message names the source and line.
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Corrupt or mismatched weight / dataset files.
class PersistenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values during training or a failed numerical routine.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace evlab
