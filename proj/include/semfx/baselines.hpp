#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "semfx/effects.hpp"
#include "semfx/fit.hpp"

namespace semfx {

enum class Family { normal, gamma, bernoulli, poisson };

const char* to_string(Family f);
Family family_from_string(const std::string& name);

/// Fully parametric regression fitted on the raw (uncentered) covariates.
/// `coef` are the link-scale coefficients (intercept first when present);
/// `beta` is the implied coefficient of y x in the log density, which is
/// what the semiparametric fit estimates.
struct ParametricFit {
  Family family = Family::normal;
  bool intercept = false;
  Eigen::VectorXd coef;
  double dispersion = 0.0;  // sigma (normal), shape alpha (gamma), unused otherwise
  Eigen::VectorXd phi;      // (coef, dispersion parameter) used for the delta method
  Eigen::MatrixXd phi_cov;  // covariance of phi (already divided by n)
  Eigen::VectorXd beta;
  double loglik = 0.0;
  int df = 0;
  long n = 0;
  int iterations = 0;
};

ParametricFit fit_parametric(const Dataset& data, Family family, bool intercept = false);

/// Coefficient row (beta), marginal effect row and one quantile row per tau.
/// Quantile rows are only defined for the normal and gamma families.
std::vector<EffectEstimate> parametric_effects(const ParametricFit& pfit, const Dataset& data,
                                               const std::vector<double>& tau_list);

/// Per-observation derivative of the conditional mean in x under the fit.
Eigen::MatrixXd parametric_mean_slopes(const ParametricFit& pfit, const Dataset& data);

}  // namespace semfx
