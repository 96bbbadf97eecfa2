#pragma once

#include <stdexcept>
#include <string>

namespace unn {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/operand dimension problems (mismatched extents, bad rank).
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Invalid layer/recon/run configuration (zero-sized conv output, bad strides...).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// API misuse: backward twice, missing gradients, non-scalar loss.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& msg) : Error(msg) {}
};

// Dataset / volume / manifest file problems.
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(msg) {}
};

// Checkpoint file problems, each a distinct condition.
class CheckpointError : public Error {
 public:
  enum class Kind { Corrupt, VersionMismatch, FingerprintMismatch, Io };
  CheckpointError(Kind k, const std::string& msg) : Error(msg), kind_(k) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Training diverged (non-finite loss or gradient).
class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& msg) : Error(msg) {}
};

}  // namespace unn
