#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace layersim {

/// Broad failure class; the CLI maps each to a stable exit code.
enum class ErrorKind {
  kDimension,    // shape mismatch between operands
  kIndex,        // index or label out of range
  kConfig,       // invalid configuration or parameter
  kFormat,       // malformed file or wire data
  kDegenerate,   // mathematically undefined input (zero norm, antipodal path, ...)
  kEmptyInput,   // operation over zero elements
  kNumerical,    // divergence or non-finite values during training
  kIo,           // filesystem failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(ErrorKind::kDimension, what) {}
};

class IndexError : public Error {
 public:
  explicit IndexError(const std::string& what) : Error(ErrorKind::kIndex, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorKind::kFormat, what) {}
};

class DegenerateError : public Error {
 public:
  explicit DegenerateError(const std::string& what) : Error(ErrorKind::kDegenerate, what) {}
};

class EmptyInputError : public Error {
 public:
  explicit EmptyInputError(const std::string& what) : Error(ErrorKind::kEmptyInput, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::kIo, what) {}
};

/// Raised when the loss becomes non-finite; `step()` is the 1-based optimizer step.
class TrainingError : public Error {
 public:
  TrainingError(std::size_t step, const std::string& what)
      : Error(ErrorKind::kNumerical, what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace layersim
