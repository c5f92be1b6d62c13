#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace faegen {

// Dimension mismatch between operands.
class ShapeError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// Input that violates a documented precondition (empty view set, off-simplex
// view distribution, out-of-range index, ...).
class InputError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// Malformed file content. line() is 1-based, 0 when not line oriented.
class ParseError : public std::runtime_error {
  public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const { return line_; }

  private:
    std::size_t line_;
};

// Non-finite loss or gradient during optimization.
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace faegen
