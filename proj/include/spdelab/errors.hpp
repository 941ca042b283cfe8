#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace spdelab {

/// Argument outside the mathematical domain of an operation (t <= 0, N < 1, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Caller broke a documented precondition on structured input
/// (non-vanishing boundary values, mismatched grids).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed or inconsistent configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File-system failure while persisting or reading run outputs.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Picard iteration failed to contract; carries the gap history.
class IterationDiverged : public std::runtime_error {
 public:
  IterationDiverged(const std::string& what, std::vector<double> gaps)
      : std::runtime_error(what), gaps_(std::move(gaps)) {}
  const std::vector<double>& gaps() const noexcept { return gaps_; }

 private:
  std::vector<double> gaps_;
};

/// Refusal to merge outputs from different configurations.
class MergeConflict : public std::runtime_error {
 public:
  MergeConflict(const std::string& what, std::vector<std::string> offenders)
      : std::runtime_error(what), offenders_(std::move(offenders)) {}
  const std::vector<std::string>& offenders() const noexcept { return offenders_; }

 private:
  std::vector<std::string> offenders_;
};

}  // namespace spdelab
