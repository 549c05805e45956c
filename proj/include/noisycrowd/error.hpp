#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace noisycrowd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  // Short machine-readable category, emitted in CLI error records.
  [[nodiscard]] virtual const char* kind() const noexcept { return "error"; }
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  [[nodiscard]] std::size_t line() const noexcept { return line_; }
  [[nodiscard]] const char* kind() const noexcept override { return "parse"; }

 private:
  std::size_t line_;
};

class RangeError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] const char* kind() const noexcept override { return "range"; }
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
  [[nodiscard]] const char* kind() const noexcept override { return "invalid_argument"; }
};

// Every true class has zero likelihood under the given confusion matrices.
class DegenerateLikelihood : public Error {
 public:
  using Error::Error;
  [[nodiscard]] const char* kind() const noexcept override { return "degenerate_likelihood"; }
};

class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(const std::string& block)
      : Error("non-finite loss or gradient in parameter block '" + block + "'"), block_(block) {}
  [[nodiscard]] const std::string& block() const noexcept { return block_; }
  [[nodiscard]] const char* kind() const noexcept override { return "non_finite"; }

 private:
  std::string block_;
};

}  // namespace noisycrowd
