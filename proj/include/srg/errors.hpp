#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace srg {

/// Shape or axis disagreement between operands. `axis()` names the offending axis.
class DimensionError : public std::invalid_argument {
 public:
  DimensionError(std::string op, std::string axis, std::size_t expected, std::size_t actual)
      : std::invalid_argument(op + ": dimension mismatch on axis '" + axis + "' (expected " +
                              std::to_string(expected) + ", got " + std::to_string(actual) + ")"),
        axis_(std::move(axis)) {}
  DimensionError(const std::string& op, std::string axis, const std::string& detail)
      : std::invalid_argument(op + ": bad dimension on axis '" + axis + "': " + detail),
        axis_(std::move(axis)) {}

  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string axis_;
};

class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed binary or text input. `offset()` is a byte offset for binary
/// files and a 1-based line number for text files.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::size_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace srg
