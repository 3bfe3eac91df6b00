// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace ftlab {

/// Root of every exception the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes that an op cannot combine.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf produced by a forward or backward computation. `op()` names
/// the op whose output first went non-finite.
class NonFiniteError : public Error {
 public:
  NonFiniteError(std::string op, const std::string& what)
      : Error(what), op_(std::move(op)) {}
  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

/// Invalid configuration values (model, training, search space, CLI config).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data. `line()` is 1-based, 0 when not line-oriented.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what) : Error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed but unusable data (empty splits, too few examples per class).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace ftlab
