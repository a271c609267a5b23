#pragma once

#include <stdexcept>
#include <string>

namespace swarmtrack {

// Argument outside an operation's domain (bad index, wrong count, non-finite angle).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Agent and predicted target mean coincide; the range-bearing Jacobian is undefined.
class DegenerateGeometry : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Covariance not positive definite, or a log of a non-positive quantity.
class NumericDomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ConfigInfeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NormalizationError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace swarmtrack
