#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace odmr {

// Base of every error raised by the library. `kind()` is a stable
// machine-readable tag used by the CLI on standard error.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class InvalidParameter : public Error {
 public:
  explicit InvalidParameter(const std::string& what) : Error("InvalidParameter", what) {}
};

// The steady-state linear system has no unique solution.
class DegenerateSystem : public Error {
 public:
  explicit DegenerateSystem(const std::string& what) : Error("DegenerateSystem", what) {}
};

class GridTooCoarse : public Error {
 public:
  explicit GridTooCoarse(const std::string& what) : Error("GridTooCoarse", what) {}
};

class NoConvergence : public Error {
 public:
  explicit NoConvergence(const std::string& what) : Error("NoConvergence", what) {}
};

class InsufficientData : public Error {
 public:
  explicit InsufficientData(const std::string& what) : Error("InsufficientData", what) {}
};

// Raised when the Jacobian at the optimum is rank deficient. Carries the
// names of the parameters spanning the null space.
class SingularJacobian : public Error {
 public:
  SingularJacobian(const std::string& what, std::vector<std::string> params)
      : Error("SingularJacobian", what), params_(std::move(params)) {}
  const std::vector<std::string>& parameters() const noexcept { return params_; }

 private:
  std::vector<std::string> params_;
};

class UnidentifiableParameter : public Error {
 public:
  UnidentifiableParameter(const std::string& what, std::vector<std::string> params)
      : Error("UnidentifiableParameter", what), params_(std::move(params)) {}
  const std::vector<std::string>& parameters() const noexcept { return params_; }

 private:
  std::vector<std::string> params_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : Error("ParseError", what + " (line " + std::to_string(line) + ", column " +
                                std::to_string(column) + ")"),
        line_(line),
        column_(column) {}
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& what) : Error("SchemaError", what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("ConfigError", what) {}
};

}  // namespace odmr
