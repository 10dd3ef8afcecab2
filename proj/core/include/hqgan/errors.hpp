#pragma once

#include <stdexcept>
#include <string>

namespace hqgan {

/// Tensor/layer dimension mismatch. Messages name both offending shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid value in a run/layer configuration (bad stride, widths, keys...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// File I/O and file-format violations.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Weight-store payload does not match its recorded checksum.
class ChecksumError : public IoError {
 public:
  using IoError::IoError;
};

/// Weight-store file has an unknown format version.
class VersionError : public IoError {
 public:
  using IoError::IoError;
};

/// Raised when a training step produces a non-finite loss. Carries a
/// diagnostic snapshot of where the run died.
class TrainAbort : public std::runtime_error {
 public:
  TrainAbort(std::string message, long step, unsigned long long seed)
      : std::runtime_error(std::move(message)), step_(step), seed_(seed) {}

  long step() const { return step_; }
  unsigned long long seed() const { return seed_; }

 private:
  long step_;
  unsigned long long seed_;
};

}  // namespace hqgan
