#pragma once

#include <stdexcept>
#include <string>

namespace profgan {

// Bad or inconsistent input data (CSV rows, stores, targets).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes that do not line up (matrices, latent vectors, caches).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A value went NaN/inf or a loss blew past the divergence guard.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CorruptCheckpointError : public CheckpointError {
 public:
  explicit CorruptCheckpointError(const std::string& what)
      : CheckpointError("corrupt checkpoint: " + what) {}
};

class CheckpointVersionError : public CheckpointError {
 public:
  explicit CheckpointVersionError(const std::string& what)
      : CheckpointError("unsupported checkpoint version: " + what) {}
};

}  // namespace profgan
