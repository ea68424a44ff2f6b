#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace wfr {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A matrix or parameter set lost rank or definiteness.
class DegeneracyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Iterative optimizer ran out of iterations; carries the best point reached.
class OptimizationError : public std::runtime_error {
 public:
  OptimizationError(const std::string& what, Eigen::VectorXd best, double best_value)
      : std::runtime_error(what), best_(std::move(best)), best_value_(best_value) {}

  const Eigen::VectorXd& best_iterate() const { return best_; }
  double best_value() const { return best_value_; }

 private:
  Eigen::VectorXd best_;
  double best_value_;
};

/// Malformed input file or configuration.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace wfr
