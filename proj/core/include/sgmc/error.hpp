#pragma once

#include <stdexcept>
#include <string>

namespace sgmc {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Violated call contract: bad argument values, empty inputs, out-of-range.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Tensor dimension mismatch.
class ShapeError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Invalid configuration: unknown primitive kind, inconsistent model config,
// infeasible sampler settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// On-disk format violation. Carries the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& msg, std::size_t byte_offset)
      : Error(msg + " (at byte offset " + std::to_string(byte_offset) + ")"),
        offset_(byte_offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Degenerate numeric input: zero-norm channel, near-zero representation.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss. Carries the iteration index.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& msg, long iteration)
      : Error(msg + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}
  long iteration() const { return iteration_; }

 private:
  long iteration_;
};

}  // namespace sgmc
