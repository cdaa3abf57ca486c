#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "semfx/model.hpp"

namespace semfx {

/// Covariates are stored centered; the column means are kept for reporting.
struct Dataset {
  Eigen::MatrixXd x;  // n x p, centered
  Eigen::VectorXd y;
  Eigen::VectorXd x_means;
  std::vector<std::string> names;
  Support support;

  static Dataset make(const Eigen::MatrixXd& x_raw, Eigen::VectorXd y, Support support,
                      std::vector<std::string> names = {});

  long n() const { return static_cast<long>(y.size()); }
  int p() const { return static_cast<int>(x.cols()); }
  Eigen::MatrixXd raw_x() const;
};

/// Continuous support padded by `pad` of the observed range on each side.
Support padded_support(const Eigen::VectorXd& y, double pad = 0.05, int quad_nodes = 201);

struct FitConfig {
  double tol = 1e-6;  // relative log-likelihood change
  int max_iter = 200;
  int order = 4;
  int interior_knots = -1;  // -1: ceil(0.7 n^{1/5})
  int quad_nodes = -1;      // -1: take it from the support
  // Divergence when ||beta||_inf exceeds this. 0 picks a scale-free default:
  // the linear index may not move the log density by more than 500 across
  // the support for any observation.
  double beta_bound = 0.0;
  int polish_steps = 4;
};

struct FittedModel {
  Eigen::VectorXd beta;
  Eigen::VectorXd gamma;  // full length m, gamma[anchor] = 0
  double loglik = 0.0;
  std::shared_ptr<const Carrier> carrier;
  Support support;
  int iterations = 0;
  double grad_norm = 0.0;
  long n = 0;
  std::vector<std::string> warnings;

  int p() const { return static_cast<int>(beta.size()); }
  int free_params() const { return p() + carrier->free_size(); }
  TiltFamily family() const { return TiltFamily(carrier, gamma); }
};

struct LoglikEval {
  double value = 0.0;
  Eigen::VectorXd gradient;  // (beta, free gamma)
  Eigen::MatrixXd hessian;
};

enum class EvalLevel { value, gradient, hessian };

/// Approximate log-likelihood and its derivatives in theta = (beta, gamma without the anchor).
LoglikEval loglik_grad_hess(const Dataset& data, const std::shared_ptr<const Carrier>& carrier,
                            const Eigen::VectorXd& beta, const Eigen::VectorXd& gamma,
                            EvalLevel level = EvalLevel::hessian);

std::shared_ptr<const Carrier> make_carrier(const Dataset& data, const FitConfig& config,
                                            std::vector<std::string>* warnings = nullptr);

/// Damped Newton on a given carrier from a given start (gamma in full length).
FittedModel fit_with_carrier(const Dataset& data, std::shared_ptr<const Carrier> carrier,
                             const FitConfig& config, Eigen::VectorXd beta0, Eigen::VectorXd gamma0);

FittedModel fit_mle(const Dataset& data, const FitConfig& config = {});
FittedModel fit_discrete(const Dataset& data, const FitConfig& config = {});
/// Dispatches on the support kind.
FittedModel fit(const Dataset& data, const FitConfig& config = {});

}  // namespace semfx
