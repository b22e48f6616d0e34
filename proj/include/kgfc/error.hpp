#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kgfc {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text input (triple files, config files, sample files).
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_ = 0;
};

/// Bad magic, version or shape in a binary model file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition (illegal action, bad id, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss, gradient or output.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// A referenced label (entity, relation, task) does not exist.
class LookupError : public Error {
 public:
  using Error::Error;
};

}  // namespace kgfc
