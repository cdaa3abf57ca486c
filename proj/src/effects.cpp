#include "semfx/effects.hpp"

#include "semfx/error.hpp"

namespace semfx {

const char* to_string(EffectEstimate::Kind kind) {
  switch (kind) {
    case EffectEstimate::Kind::coefficient: return "beta";
    case EffectEstimate::Kind::marginal: return "xi";
    case EffectEstimate::Kind::quantile: return "eta";
  }
  return "unknown";
}

double mean_conditional_variance(const FittedModel& fit, const Dataset& data) {
  const TiltFamily fam = fit.family();
  const Eigen::VectorXd eta = data.x * fit.beta;
  double s = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) s += fam.moments(eta[i]).var;
  return s / static_cast<double>(eta.size());
}

Eigen::VectorXd marginal_effect(const FittedModel& fit, const Dataset& data) {
  return fit.beta * mean_conditional_variance(fit, data);
}

double mean_quantile_slope(const FittedModel& fit, const Dataset& data, double tau) {
  if (fit.carrier->discrete()) {
    throw Error(ErrorKind::unsupported, "quantile effects need a continuous response");
  }
  const TiltFamily fam = fit.family();
  const Eigen::VectorXd eta = data.x * fit.beta;
  double s = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) s += fam.quantile(eta[i], tau).qprime;
  return s / static_cast<double>(eta.size());
}

Eigen::VectorXd quantile_effect(const FittedModel& fit, const Dataset& data, double tau) {
  return fit.beta * mean_quantile_slope(fit, data, tau);
}

std::vector<double> default_tau_grid() { return {0.05, 0.25, 0.5, 0.75, 0.95}; }

}  // namespace semfx
