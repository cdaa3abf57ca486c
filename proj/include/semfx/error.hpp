#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace semfx {

enum class ErrorKind {
  domain,              // argument outside the admissible range
  degenerate_input,    // too few distinct values, collapsed support, ...
  unsupported,         // operation not defined for this model/response type
  numeric,             // non-finite intermediate
  non_convergence,
  divergence,
  singular_information,
  ill_conditioned_quantile,
  config,
  parse,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised when the Newton iteration stops without meeting the convergence
/// test. Carries the last iterate so callers can inspect or warm-start.
class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& what, Eigen::VectorXd beta, Eigen::VectorXd gamma)
      : Error(ErrorKind::non_convergence, what), beta_(std::move(beta)), gamma_(std::move(gamma)) {}

  const Eigen::VectorXd& last_beta() const { return beta_; }
  const Eigen::VectorXd& last_gamma() const { return gamma_; }

 private:
  Eigen::VectorXd beta_;
  Eigen::VectorXd gamma_;
};

/// Non-finite quantity while accumulating per-observation terms.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, long observation)
      : Error(ErrorKind::numeric, what), observation_(observation) {}
  long observation() const noexcept { return observation_; }

 private:
  long observation_;
};

}  // namespace semfx
