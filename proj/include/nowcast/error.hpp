#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace nowcast {

// Base of every error raised by the engine. `category()` is used by the CLI to
// pick an exit code and a machine-parsable prefix.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* category() const noexcept { return "error"; }
};

class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }
  const char* category() const noexcept override { return "parse"; }

 private:
  std::size_t line_;
};

class GapError : public Error {
 public:
  GapError(const std::string& what, std::vector<std::string> missing)
      : Error(what), missing_(std::move(missing)) {}
  const std::vector<std::string>& missing_dates() const noexcept { return missing_; }
  const char* category() const noexcept override { return "gap"; }

 private:
  std::vector<std::string> missing_;
};

class DomainError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "domain"; }
};

class SizeError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "size"; }
};

class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "not_positive_definite"; }
};

class ModelEvaluationError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "model"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "config"; }
};

// Unreadable or unwritable files.
class IoError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "io"; }
};

class SamplerError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "sampler"; }
};

}  // namespace nowcast
