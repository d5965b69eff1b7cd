// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace scenediff {

// Error categories. The CLI maps each to its own exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* category() const noexcept { return "error"; }
};

class ShapeError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "shape"; }
};

class NumericError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "numeric"; }
};

class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::string token, std::size_t position)
      : Error(message), token_(std::move(token)), position_(position) {}
  const std::string& token() const noexcept { return token_; }
  std::size_t position() const noexcept { return position_; }
  const char* category() const noexcept override { return "parse"; }

 private:
  std::string token_;
  std::size_t position_;
};

class SchemaError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "schema"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "config"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "io"; }
};

class CheckpointError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "checkpoint"; }
};

}  // namespace scenediff
