#pragma once

#include <stdexcept>
#include <string>

namespace bpstack {

// Exit codes map onto these three families: data (1), config (2), invariant (3).

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t row)
      : DataError(what + " (row " + std::to_string(row) + ")"), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class EmptyCohortError : public DataError {
 public:
  using DataError::DataError;
};

class DomainError : public DataError {
 public:
  using DataError::DataError;
};

class SelectionError : public DataError {
 public:
  using DataError::DataError;
};

class SchemaMismatchError : public DataError {
 public:
  using DataError::DataError;
};

class UndefinedVifError : public DataError {
 public:
  using DataError::DataError;
};

class SolverError : public DataError {
 public:
  SolverError(const std::string& what, double gap)
      : DataError(what), gap_(gap) {}
  double objective_gap() const noexcept { return gap_; }

 private:
  double gap_;
};

}  // namespace bpstack
