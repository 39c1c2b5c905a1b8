#pragma once

#include <stdexcept>
#include <string>

namespace rbx {

// Caller broke a documented precondition (stepping a dead episode, shape mismatch, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Level text could not be parsed. Line and column are 1-based.
class ParseError : public std::runtime_error {
 public:
  ParseError(int line, int column, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) +
                           ": " + what),
        line_(line),
        column_(column) {}

  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

// Snapshot or checkpoint bytes are corrupt or from an incompatible build.
class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Loss became non-finite during gradient descent.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Exhaustive reachability search exceeded its state cap.
class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rbx
