#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tailmc {

// Base for every error raised by the library. `kind()` is a short stable tag
// used by the CLI when it prints a machine-readable failure line.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& message)
      : Error("invalid_argument", message) {}
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error("parse", "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DuplicateRating : public Error {
 public:
  DuplicateRating(std::size_t line, const std::string& user,
                  const std::string& item)
      : Error("duplicate", "line " + std::to_string(line) +
                               ": duplicate rating for (" + user + ", " +
                               item + ")"),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(std::size_t epoch)
      : Error("divergence", "training diverged at epoch " +
                                std::to_string(epoch)),
        epoch_(epoch) {}

  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io", message) {}
};

}  // namespace tailmc
