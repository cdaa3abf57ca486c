#pragma once

#include <vector>

#include <Eigen/Dense>

#include "semfx/effects.hpp"
#include "semfx/fit.hpp"

namespace semfx {

/// Averaged conditional covariance of (xY, B~(Y)) given x under the fitted
/// model, with B~ the basis without the anchor column.
struct SigmaBlocks {
  Eigen::MatrixXd s11;  // p x p
  Eigen::MatrixXd s12;  // p x m~
  Eigen::MatrixXd s22;  // m~ x m~
  Eigen::MatrixXd sstar;
  Eigen::MatrixXd sigma_beta;
  long n = 0;

  Eigen::MatrixXd assembled() const;
  /// Inverse of the assembled matrix.
  Eigen::MatrixXd inverse() const;
};

SigmaBlocks sigma_blocks(const FittedModel& fit, const Dataset& data);

struct XiVarParts {
  Eigen::MatrixXd a1;
  Eigen::MatrixXd a2;
  double mean_condvar = 0.0;
  double var_of_condvar = 0.0;
};

struct EtaVarParts {
  double tau = 0.5;
  Eigen::MatrixXd c1;
  Eigen::MatrixXd c2;
  double mean_qprime = 0.0;
  double var_of_qprime = 0.0;
};

struct XiVariance {
  XiVarParts parts;
  Eigen::MatrixXd sigma;
};

struct EtaVariance {
  EtaVarParts parts;
  Eigen::MatrixXd sigma;
};

XiVariance var_xi(const FittedModel& fit, const Dataset& data, const SigmaBlocks& blocks);
EtaVariance var_eta(const FittedModel& fit, const Dataset& data, const SigmaBlocks& blocks, double tau);

inline constexpr double kZ975 = 1.959964;

/// se = sqrt(diag(sigma) / n), 95% normal interval and two-sided p-value.
void wald(const Eigen::VectorXd& point, const Eigen::MatrixXd& sigma, long n, EffectEstimate& out);

EffectEstimate estimate_beta(const FittedModel& fit, const Dataset& data, const SigmaBlocks& blocks);
EffectEstimate estimate_xi(const FittedModel& fit, const Dataset& data, const SigmaBlocks& blocks);
EffectEstimate estimate_eta(const FittedModel& fit, const Dataset& data, const SigmaBlocks& blocks,
                            double tau);

struct InfoCriteria {
  int df = 0;
  double aic = 0.0;
  double bic = 0.0;
};

InfoCriteria aic_bic(double loglik, int df, double n);
InfoCriteria aic_bic(const FittedModel& fit);

struct CurvePoint {
  double y = 0.0;
  double c = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Evenly spaced grid over the support, endpoints included.
std::vector<double> support_grid(const FittedModel& fit, int size);
/// c(y) = B(y)^T gamma with a pointwise delta-method band from the gamma block of the inverse information.
std::vector<CurvePoint> curve_band(const FittedModel& fit, const SigmaBlocks& blocks,
                                   const std::vector<double>& grid);

}  // namespace semfx
