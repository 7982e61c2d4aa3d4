#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace patchpref {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible (matmul inner dims, elementwise shapes).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller-supplied parameter is out of its allowed range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A precondition on an argument's contents was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed TNSR payload. Carries the byte offset where decoding failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Invalid scene descriptor (placement outside bounds, degenerate object).
class DescriptorError : public Error {
 public:
  using Error::Error;
};

/// A training loop produced a non-finite loss or failed to converge.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : Error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace patchpref
