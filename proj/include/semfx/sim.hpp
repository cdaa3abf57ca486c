#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "semfx/baselines.hpp"
#include "semfx/fit.hpp"

namespace semfx {

enum class CovariateLaw { mvnormal, uniform };
enum class ResponseLaw { trunc_normal, normal, trunc_gamma, gamma, bernoulli, poisson, negbinomial };

const char* to_string(CovariateLaw law);
const char* to_string(ResponseLaw law);

struct Scenario {
  std::string name;
  CovariateLaw covariate_law = CovariateLaw::mvnormal;
  double rho = 0.1;  // mvnormal: cov(X_k, X_l) = rho^|k-l|
  double unif_lo = 0.5;
  double unif_hi = 1.0;

  ResponseLaw response_law = ResponseLaw::trunc_normal;
  // Coefficients as they enter the response law: the mean for the normal
  // designs, alpha*theta = 1/beta^T x for gamma, the logit for Bernoulli and
  // log theta for Poisson and negative binomial.
  Eigen::VectorXd beta;
  double sigma = 1.0;
  double trunc_lo = -5.0;
  double trunc_hi = 5.0;
  double shape = 5.0;  // gamma alpha
  double nb_size = 2.0;

  long n = 1000;
  int replicates = 1000;
  std::vector<double> tau_list;
  std::uint64_t seed = 20240917;

  Family baseline = Family::normal;
  bool baseline_intercept = false;
  FitConfig fit_config;

  int p() const { return static_cast<int>(beta.size()); }
  bool continuous() const;
  /// Coefficient of y x in the log density, i.e. the target of the semiparametric fit.
  Eigen::VectorXd natural_beta() const;
  void validate() const;
};

std::vector<std::string> preset_names();
/// Throws Error(config) for unknown names.
Scenario preset(const std::string& name);

/// Deterministic in (scenario.seed, replicate).
Dataset generate(const Scenario& scenario, long replicate);
/// Covariates only, for checking the covariate law.
Eigen::MatrixXd generate_covariates(const Scenario& scenario, long n, long replicate);

struct TrueEffects {
  Eigen::VectorXd beta;  // natural coefficients
  Eigen::VectorXd xi;
  std::vector<double> tau;
  std::vector<Eigen::VectorXd> eta;  // one per tau
  double mean_condvar = 0.0;
  std::vector<double> mean_qprime;
};

/// Population xi and eta_tau under the true law. Covariate expectations use
/// product Gauss-Legendre rules (the index is exactly normal under the
/// mvnormal law); conditional variances and quantile slopes are closed form
/// where available and fine quadrature of the exact density otherwise.
TrueEffects true_effects(const Scenario& scenario, const std::vector<double>& tau_list);

/// Exact conditional variance and tau-quantile slope at natural index nu.
double true_conditional_variance(const Scenario& scenario, double nu);
double true_quantile_slope(const Scenario& scenario, double nu, double tau);

enum class Method { amle, mle };
const char* to_string(Method m);

struct EstimandSummary {
  std::string estimand;  // beta1, xi2, eta0.5_1, ...
  double truth = 0.0;
  double mean_abs_bias = 0.0;
  double sd_sim = 0.0;  // NaN with fewer than two successful replicates
  double mean_se = 0.0;
  double coverage = 0.0;
  long count = 0;
  std::vector<double> estimates;  // kept only on request
  std::vector<double> ses;
};

struct MethodSummary {
  Method method = Method::amle;
  long failures = 0;
  std::vector<std::string> failure_messages;  // first few
  std::vector<EstimandSummary> rows;
};

struct SimulationReport {
  Scenario scenario;
  TrueEffects truth;
  std::vector<MethodSummary> methods;

  const MethodSummary& method(Method m) const;
  const EstimandSummary& row(Method m, const std::string& estimand) const;
};

struct RunOptions {
  int workers = 0;  // 0: SEMFX_THREADS or hardware concurrency
  bool keep_estimates = false;
  double max_failure_rate = 0.05;
};

SimulationReport run_scenario(const Scenario& scenario, const std::vector<Method>& methods,
                              const RunOptions& options = {});

std::string report_json(const SimulationReport& report, int indent = 2);
/// Fixed-width table with the |bias|, sigma_sim, mean sigma_est, coverage quadruple per method.
std::string report_table(const SimulationReport& report);

/// Scenario from a JSON object: either {"preset": name, ...overrides} or a full description.
Scenario scenario_from_json(const std::string& text);

}  // namespace semfx
