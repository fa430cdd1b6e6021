#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedsim {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Vector/matrix dimensions disagree with a model spec or with each other.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside the operation's domain (empty batch, bad label, zero weights...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration. `field()` names the offending key when known.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
  explicit ConfigError(const std::string& message) : ConfigError("", message) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Malformed input file. `line()` is 1-based; 0 when the error is not tied to a line.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error(line == 0 ? message : "line " + std::to_string(line) + ": " + message), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A well-formed row that violates the file's declared schema.
class SchemaError : public ParseError {
 public:
  using ParseError::ParseError;
};

// Charging a participant past its access budget.
class BudgetExhaustedError : public Error {
 public:
  explicit BudgetExhaustedError(int client_id)
      : Error("access budget exhausted for client " + std::to_string(client_id)),
        client_id_(client_id) {}

  int client_id() const noexcept { return client_id_; }

 private:
  int client_id_;
};

// Caller broke a documented precondition on the data it handed over.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// A results bundle lacks a required file.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

// Cosine similarity requested for a zero vector.
class UndefinedSimilarityError : public DomainError {
 public:
  using DomainError::DomainError;
};

}  // namespace fedsim
