#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "semfx/fit.hpp"

namespace semfx {

struct EffectEstimate {
  enum class Kind { coefficient, marginal, quantile };

  Kind kind = Kind::marginal;
  double tau = 0.0;  // quantile rows only
  std::vector<std::string> names;
  Eigen::VectorXd point;
  Eigen::VectorXd se;
  Eigen::VectorXd ci_lo;
  Eigen::VectorXd ci_hi;
  Eigen::VectorXd p_value;
  std::vector<std::string> warnings;
};

const char* to_string(EffectEstimate::Kind kind);

/// n^{-1} sum_i var*(Y | x_i) under the fitted model.
double mean_conditional_variance(const FittedModel& fit, const Dataset& data);
/// xi = beta * mean conditional variance.
Eigen::VectorXd marginal_effect(const FittedModel& fit, const Dataset& data);

/// n^{-1} sum_i q'(nu_i) for the tau-quantile; continuous responses only.
double mean_quantile_slope(const FittedModel& fit, const Dataset& data, double tau);
/// eta_tau = beta * mean quantile slope.
Eigen::VectorXd quantile_effect(const FittedModel& fit, const Dataset& data, double tau);

std::vector<double> default_tau_grid();

}  // namespace semfx
