#include "semfx/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include "json.hpp"

#include "semfx/error.hpp"
#include "semfx/inference.hpp"
#include "semfx/parallel.hpp"
#include "semfx/quadrature.hpp"
#include "semfx/rng.hpp"

namespace semfx {

namespace {

using ojson = nlohmann::ordered_json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::map<std::string, ResponseLaw>& response_names() {
  static const std::map<std::string, ResponseLaw> m = {
      {"trunc-normal", ResponseLaw::trunc_normal}, {"normal", ResponseLaw::normal},
      {"trunc-gamma", ResponseLaw::trunc_gamma},   {"gamma", ResponseLaw::gamma},
      {"bernoulli", ResponseLaw::bernoulli},       {"poisson", ResponseLaw::poisson},
      {"negbinomial", ResponseLaw::negbinomial}};
  return m;
}

bool is_gamma(ResponseLaw r) { return r == ResponseLaw::trunc_gamma || r == ResponseLaw::gamma; }
bool is_normal(ResponseLaw r) { return r == ResponseLaw::trunc_normal || r == ResponseLaw::normal; }
bool is_truncated(ResponseLaw r) {
  return r == ResponseLaw::trunc_normal || r == ResponseLaw::trunc_gamma;
}

// Range of beta^T x over the uniform covariate box.
std::pair<double, double> index_range(const Scenario& s, const Eigen::VectorXd& b) {
  double lo = 0.0;
  double hi = 0.0;
  for (int k = 0; k < b.size(); ++k) {
    const double a = b[k] * s.unif_lo;
    const double c = b[k] * s.unif_hi;
    lo += std::min(a, c);
    hi += std::max(a, c);
  }
  return {lo, hi};
}

Eigen::MatrixXd covariate_cov(const Scenario& s) {
  const int p = s.p();
  Eigen::MatrixXd sigma(p, p);
  for (int k = 0; k < p; ++k) {
    for (int l = 0; l < p; ++l) sigma(k, l) = std::pow(s.rho, std::abs(k - l));
  }
  return sigma;
}

double std_normal_quantile(double u) {
  static const boost::math::normal law;
  return boost::math::quantile(law, u);
}

// Inverse-CDF draw from N(mean, sd^2) restricted to [lo, hi].
double trunc_normal_draw(double mean, double sd, double lo, double hi, double u) {
  const boost::math::normal law(mean, sd);
  double v;
  if (mean < lo) {
    const double sa = boost::math::cdf(boost::math::complement(law, lo));
    const double sb = boost::math::cdf(boost::math::complement(law, hi));
    if (!(sa > 0.0)) {
      // Far tail: the restricted law is an exponential with rate (lo - mean)/sd^2.
      const double rate = (lo - mean) / (sd * sd);
      return lo - std::log1p(-u * -std::expm1(-rate * (hi - lo))) / rate;
    }
    v = boost::math::quantile(boost::math::complement(law, sa - u * (sa - sb)));
  } else {
    const double fa = boost::math::cdf(law, lo);
    const double fb = boost::math::cdf(law, hi);
    if (!(fb > 0.0)) {
      const double rate = (mean - hi) / (sd * sd);
      return hi + std::log1p(-(1.0 - u) * -std::expm1(-rate * (hi - lo))) / rate;
    }
    v = boost::math::quantile(law, fa + u * (fb - fa));
  }
  return std::clamp(v, lo, hi);
}

double poisson_draw(double lambda, double u) {
  double pr = std::exp(-lambda);
  double cum = pr;
  int k = 0;
  while (u > cum && k < 100000) {
    ++k;
    pr *= lambda / k;
    cum += pr;
    if (pr == 0.0 && k > lambda) break;
  }
  return k;
}

double negbinomial_draw(double theta, double r, double u) {
  double pr = std::pow(1.0 - theta, r);
  double cum = pr;
  int k = 0;
  while (u > cum && k < 100000) {
    pr *= theta * (k + r) / (k + 1);
    ++k;
    cum += pr;
    if (pr == 0.0 && k > r * theta / (1.0 - theta)) break;
  }
  return k;
}

// Density exp{nu y + c(y)} on [lo, hi] integrated with a fine composite
// Gauss-Legendre rule; gives the exact conditional law of the truncated
// designs up to quadrature error far below Monte Carlo noise.
class ExactLaw {
 public:
  ExactLaw(std::function<double(double)> log_base, double lo, double hi, int panels = 128,
           int per = 24)
      : log_base_(std::move(log_base)), per_(per) {
    breaks_.resize(static_cast<std::size_t>(panels) + 1);
    for (int k = 0; k <= panels; ++k) breaks_[static_cast<std::size_t>(k)] = lo + (hi - lo) * k / panels;
    const QuadratureGrid g = composite_gauss_legendre(breaks_, panels * per, per);
    y_ = g.nodes;
    w_ = g.weights;
    c_.resize(y_.size());
    for (std::size_t j = 0; j < y_.size(); ++j) c_[j] = log_base_(y_[j]);
  }

  struct State {
    double nu = 0.0;
    double shift = 0.0;
    double z = 0.0;
    std::vector<double> mass;  // unnormalized weight * exp(. - shift)
  };

  State state(double nu) const {
    State s;
    s.nu = nu;
    s.shift = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < y_.size(); ++j) s.shift = std::max(s.shift, nu * y_[j] + c_[j]);
    s.mass.resize(y_.size());
    for (std::size_t j = 0; j < y_.size(); ++j) {
      s.mass[j] = w_[j] * std::exp(nu * y_[j] + c_[j] - s.shift);
      s.z += s.mass[j];
    }
    return s;
  }

  double variance(double nu) const {
    const State s = state(nu);
    double m1 = 0.0;
    for (std::size_t j = 0; j < y_.size(); ++j) m1 += s.mass[j] * y_[j];
    m1 /= s.z;
    double v = 0.0;
    for (std::size_t j = 0; j < y_.size(); ++j) v += s.mass[j] * (y_[j] - m1) * (y_[j] - m1);
    return v / s.z;
  }

  // dq/dnu = E{(tau - 1(Y <= q))(Y - q)} / f(q).
  double quantile_slope(double nu, double tau) const {
    const State s = state(nu);
    const int panels = static_cast<int>(breaks_.size()) - 1;
    const double target = tau * s.z;
    double before = 0.0;
    int k = 0;
    for (; k < panels - 1; ++k) {
      double pm = 0.0;
      for (int j = 0; j < per_; ++j) pm += s.mass[static_cast<std::size_t>(k * per_ + j)];
      if (before + pm >= target) break;
      before += pm;
    }
    const double a = breaks_[static_cast<std::size_t>(k)];
    double lo = a;
    double hi = breaks_[static_cast<std::size_t>(k) + 1];
    double q = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
      const double g = before + partial(s, a, q, 0.0) - target;
      if (g > 0.0) {
        hi = q;
      } else {
        lo = q;
      }
      const double dens = density(s, q);
      double next = dens > 0.0 ? q - g / dens : 0.5 * (lo + hi);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - q) < 1e-15 * (1.0 + std::abs(q)) || hi - lo < 1e-15) {
        q = next;
        break;
      }
      q = next;
    }
    double mean = 0.0;
    for (std::size_t j = 0; j < y_.size(); ++j) mean += s.mass[j] * y_[j];
    double below = 0.0;
    for (int j = 0; j < k * per_; ++j) {
      below += s.mass[static_cast<std::size_t>(j)] * (y_[static_cast<std::size_t>(j)] - q);
    }
    below += partial(s, a, q, 1.0);
    const double num = (tau * (mean - q * s.z) - below) / s.z;
    const double f = density(s, q) / s.z;
    return num / f;
  }

 private:
  double density(const State& s, double y) const {
    return std::exp(s.nu * y + log_base_(y) - s.shift);
  }

  // Integral over [a, q] of (y - q)^power * exp(. - shift).
  double partial(const State& s, double a, double q, double power) const {
    if (!(q > a)) return 0.0;
    const QuadratureGrid g = gauss_legendre(per_, a, q);
    double out = 0.0;
    for (std::size_t j = 0; j < g.nodes.size(); ++j) {
      const double f = g.weights[j] * density(s, g.nodes[j]);
      out += power == 0.0 ? f : f * (g.nodes[j] - q);
    }
    return out;
  }

  std::function<double(double)> log_base_;
  int per_;
  std::vector<double> breaks_;
  std::vector<double> y_;
  std::vector<double> w_;
  std::vector<double> c_;
};

std::unique_ptr<ExactLaw> exact_law(const Scenario& s) {
  if (s.response_law == ResponseLaw::trunc_normal) {
    const double s2 = s.sigma * s.sigma;
    return std::make_unique<ExactLaw>([s2](double y) { return -0.5 * y * y / s2; }, s.trunc_lo,
                                      s.trunc_hi);
  }
  if (s.response_law == ResponseLaw::trunc_gamma) {
    const double a1 = s.shape - 1.0;
    return std::make_unique<ExactLaw>([a1](double y) { return a1 * std::log(y); }, 0.0, s.trunc_hi);
  }
  return nullptr;
}

double closed_variance(const Scenario& s, double nu) {
  switch (s.response_law) {
    case ResponseLaw::normal:
      return s.sigma * s.sigma;
    case ResponseLaw::gamma:
      return s.shape / (nu * nu);
    case ResponseLaw::bernoulli: {
      const double pr = 1.0 / (1.0 + std::exp(-nu));
      return pr * (1.0 - pr);
    }
    case ResponseLaw::poisson:
      return std::exp(nu);
    case ResponseLaw::negbinomial: {
      const double th = std::exp(nu);
      return s.nb_size * th / ((1.0 - th) * (1.0 - th));
    }
    default:
      break;
  }
  throw Error(ErrorKind::unsupported, "no closed-form variance for this law");
}

double closed_qslope(const Scenario& s, double nu, double tau) {
  if (s.response_law == ResponseLaw::normal) return s.sigma * s.sigma;
  if (s.response_law == ResponseLaw::gamma) {
    // q = -G_tau / nu with G_tau the standard gamma(alpha) quantile.
    return boost::math::gamma_p_inv(s.shape, tau) / (nu * nu);
  }
  throw Error(ErrorKind::unsupported, "quantile effects need a continuous response");
}

// Nodes and weights for E{g(beta_nat^T X)}.
void index_rule(const Scenario& s, const Eigen::VectorXd& bnat, std::vector<double>& nu,
                std::vector<double>& wt) {
  nu.clear();
  wt.clear();
  if (s.covariate_law == CovariateLaw::mvnormal) {
    const double sd = std::sqrt(bnat.dot(covariate_cov(s) * bnat));
    std::vector<double> br(41);
    for (int k = 0; k <= 40; ++k) br[static_cast<std::size_t>(k)] = -10.0 + 0.5 * k;
    const QuadratureGrid g = composite_gauss_legendre(br, 40 * 16, 16);
    for (std::size_t j = 0; j < g.nodes.size(); ++j) {
      const double z = g.nodes[j];
      nu.push_back(sd * z);
      wt.push_back(g.weights[j] * std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi));
    }
    return;
  }
  const int p = s.p();
  const int per = p <= 2 ? 24 : (p == 3 ? 12 : 6);
  const QuadratureGrid g = gauss_legendre(per, s.unif_lo, s.unif_hi);
  const double vol = std::pow(s.unif_hi - s.unif_lo, p);
  std::vector<int> idx(static_cast<std::size_t>(p), 0);
  for (;;) {
    double v = 0.0;
    double w = 1.0 / vol;
    for (int k = 0; k < p; ++k) {
      v += bnat[k] * g.nodes[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])];
      w *= g.weights[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])];
    }
    nu.push_back(v);
    wt.push_back(w);
    int k = 0;
    while (k < p && ++idx[static_cast<std::size_t>(k)] == per) idx[static_cast<std::size_t>(k++)] = 0;
    if (k == p) break;
  }
}

std::string tau_label(double tau) {
  std::ostringstream os;
  os << tau;
  return os.str();
}

struct Estimand {
  std::string name;
  double truth = 0.0;
};

std::vector<Estimand> estimands(const Scenario& s, const TrueEffects& t, Method m) {
  std::vector<Estimand> out;
  const int p = s.p();
  for (int k = 0; k < p; ++k) out.push_back({"beta" + std::to_string(k + 1), t.beta[k]});
  for (int k = 0; k < p; ++k) out.push_back({"xi" + std::to_string(k + 1), t.xi[k]});
  const bool quantiles =
      s.continuous() && (m == Method::amle || s.baseline == Family::normal || s.baseline == Family::gamma);
  if (quantiles) {
    for (std::size_t j = 0; j < t.tau.size(); ++j) {
      for (int k = 0; k < p; ++k) {
        out.push_back({"eta" + tau_label(t.tau[j]) + "_" + std::to_string(k + 1), t.eta[j][k]});
      }
    }
  }
  return out;
}

struct MethodOutcome {
  bool ok = false;
  ErrorKind kind = ErrorKind::numeric;
  std::string message;
  std::vector<double> est;
  std::vector<double> se;
};

void append(const EffectEstimate& e, MethodOutcome& out) {
  for (int k = 0; k < e.point.size(); ++k) {
    out.est.push_back(e.point[k]);
    out.se.push_back(e.se[k]);
  }
}

MethodOutcome run_method(const Scenario& s, const Dataset& d, Method m, bool quantiles) {
  MethodOutcome out;
  try {
    if (m == Method::amle) {
      const FittedModel f = fit(d, s.fit_config);
      const SigmaBlocks bl = sigma_blocks(f, d);
      append(estimate_beta(f, d, bl), out);
      append(estimate_xi(f, d, bl), out);
      if (quantiles) {
        for (double tau : s.tau_list) append(estimate_eta(f, d, bl, tau), out);
      }
    } else {
      const ParametricFit pf = fit_parametric(d, s.baseline, s.baseline_intercept);
      const auto rows = parametric_effects(pf, d, quantiles ? s.tau_list : std::vector<double>{});
      for (const auto& r : rows) append(r, out);
    }
    out.ok = true;
    for (double v : out.est) out.ok = out.ok && std::isfinite(v);
    for (double v : out.se) out.ok = out.ok && std::isfinite(v);
    if (!out.ok) {
      out.kind = ErrorKind::numeric;
      out.message = "non-finite estimate";
    }
  } catch (const Error& e) {
    out.ok = false;
    out.kind = e.kind();
    out.message = e.what();
  }
  return out;
}

ojson vector_json(const Eigen::VectorXd& v) {
  ojson a = ojson::array();
  for (int k = 0; k < v.size(); ++k) a.push_back(v[k]);
  return a;
}

ojson scenario_json(const Scenario& s) {
  ojson j;
  j["name"] = s.name;
  j["covariate_law"] = to_string(s.covariate_law);
  if (s.covariate_law == CovariateLaw::mvnormal) {
    j["rho"] = s.rho;
  } else {
    j["unif_lo"] = s.unif_lo;
    j["unif_hi"] = s.unif_hi;
  }
  j["response_law"] = to_string(s.response_law);
  j["beta"] = vector_json(s.beta);
  if (is_normal(s.response_law)) j["sigma"] = s.sigma;
  if (s.response_law == ResponseLaw::trunc_normal) j["trunc_lo"] = s.trunc_lo;
  if (is_truncated(s.response_law)) j["trunc_hi"] = s.trunc_hi;
  if (is_gamma(s.response_law)) j["shape"] = s.shape;
  if (s.response_law == ResponseLaw::negbinomial) j["nb_size"] = s.nb_size;
  j["n"] = s.n;
  j["replicates"] = s.replicates;
  j["tau"] = s.tau_list;
  j["seed"] = s.seed;
  j["baseline"] = to_string(s.baseline);
  j["baseline_intercept"] = s.baseline_intercept;
  return j;
}

}  // namespace

const char* to_string(CovariateLaw law) {
  return law == CovariateLaw::mvnormal ? "mvnormal" : "uniform";
}

const char* to_string(ResponseLaw law) {
  for (const auto& [name, r] : response_names()) {
    if (r == law) return name.c_str();
  }
  return "unknown";
}

const char* to_string(Method m) { return m == Method::amle ? "aMLE" : "MLE"; }

bool Scenario::continuous() const {
  return response_law != ResponseLaw::bernoulli && response_law != ResponseLaw::poisson &&
         response_law != ResponseLaw::negbinomial;
}

Eigen::VectorXd Scenario::natural_beta() const {
  if (is_normal(response_law)) return beta / (sigma * sigma);
  if (is_gamma(response_law)) return -shape * beta;
  return beta;
}

void Scenario::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorKind::config, "scenario: " + what); };
  if (beta.size() < 1) bad("beta must be non-empty");
  if (!beta.allFinite()) bad("beta must be finite");
  if (n < 10) bad("n must be at least 10");
  if (replicates < 1) bad("replicates must be positive");
  if (covariate_law == CovariateLaw::mvnormal && !(std::abs(rho) < 1.0)) bad("rho must lie in (-1, 1)");
  if (covariate_law == CovariateLaw::uniform && !(unif_lo < unif_hi)) bad("unif_lo must be below unif_hi");
  if (is_normal(response_law) && !(sigma > 0.0)) bad("sigma must be positive");
  if (response_law == ResponseLaw::trunc_normal && !(trunc_lo < trunc_hi)) bad("trunc_lo must be below trunc_hi");
  if (is_gamma(response_law)) {
    if (!(shape > 0.0)) bad("shape must be positive");
    if (response_law == ResponseLaw::trunc_gamma && !(trunc_hi > 0.0)) bad("trunc_hi must be positive");
    if (covariate_law != CovariateLaw::uniform) bad("gamma designs need positive uniform covariates");
    if (!(index_range(*this, beta).first > 0.0)) bad("gamma designs need beta^T x > 0 on the covariate box");
  }
  if (response_law == ResponseLaw::negbinomial) {
    if (!(nb_size > 0.0)) bad("nb_size must be positive");
    if (covariate_law != CovariateLaw::uniform) bad("negative binomial needs uniform covariates");
    if (!(index_range(*this, beta).second < 0.0)) bad("negative binomial needs beta^T x < 0 on the covariate box");
  }
  for (double t : tau_list) {
    if (!(t > 0.0 && t < 1.0)) bad("tau must lie in (0, 1)");
  }
  if (!continuous() && !tau_list.empty()) bad("quantile effects need a continuous response");
}

std::vector<std::string> preset_names() {
  return {"trunc-normal", "normal", "trunc-gamma", "gamma", "bernoulli", "poisson", "negbinomial"};
}

Scenario preset(const std::string& name) {
  Scenario s;
  s.name = name;
  if (name == "trunc-normal" || name == "normal") {
    s.covariate_law = CovariateLaw::mvnormal;
    s.response_law = name == "normal" ? ResponseLaw::normal : ResponseLaw::trunc_normal;
    s.beta = Eigen::Vector3d(1.0, 2.0, 3.0);
    s.baseline = Family::normal;
  } else if (name == "trunc-gamma" || name == "gamma") {
    s.covariate_law = CovariateLaw::uniform;
    s.response_law = name == "gamma" ? ResponseLaw::gamma : ResponseLaw::trunc_gamma;
    s.beta = Eigen::Vector2d(0.5, 1.0);
    s.trunc_hi = 2.0;
    s.tau_list = {0.5};
    s.baseline = Family::gamma;
  } else if (name == "bernoulli") {
    s.covariate_law = CovariateLaw::mvnormal;
    s.response_law = ResponseLaw::bernoulli;
    s.beta = Eigen::Vector3d(-0.5, 0.5, 1.0);
    s.baseline = Family::bernoulli;
    // The discrete semiparametric model is the logistic model with a free intercept.
    s.baseline_intercept = true;
  } else if (name == "poisson" || name == "negbinomial") {
    s.covariate_law = CovariateLaw::uniform;
    s.response_law = name == "poisson" ? ResponseLaw::poisson : ResponseLaw::negbinomial;
    s.beta = name == "poisson" ? Eigen::Vector2d(0.0, 1.0) : Eigen::Vector2d(0.0, -1.0);
    s.baseline = Family::poisson;
  } else {
    throw Error(ErrorKind::config, "unknown scenario preset '" + name + "'");
  }
  return s;
}

Eigen::MatrixXd generate_covariates(const Scenario& s, long n, long replicate) {
  s.validate();
  Stream rng(s.seed, static_cast<std::uint64_t>(replicate));
  const int p = s.p();
  Eigen::MatrixXd x(n, p);
  if (s.covariate_law == CovariateLaw::mvnormal) {
    const Eigen::MatrixXd l = covariate_cov(s).llt().matrixL();
    Eigen::VectorXd z(p);
    for (long i = 0; i < n; ++i) {
      for (int k = 0; k < p; ++k) z[k] = std_normal_quantile(rng.uniform());
      x.row(i) = (l * z).transpose();
    }
  } else {
    for (long i = 0; i < n; ++i) {
      for (int k = 0; k < p; ++k) x(i, k) = s.unif_lo + (s.unif_hi - s.unif_lo) * rng.uniform();
    }
  }
  return x;
}

Dataset generate(const Scenario& s, long replicate) {
  s.validate();
  const Eigen::MatrixXd x = generate_covariates(s, s.n, replicate);
  // Responses use a separate stream so covariates do not depend on the response law.
  Stream rng(s.seed ^ 0x5bd1e9955bd1e995ULL, static_cast<std::uint64_t>(replicate));
  const long n = s.n;
  Eigen::VectorXd y(n);
  for (long i = 0; i < n; ++i) {
    const double lin = x.row(i).dot(s.beta);
    const double u = rng.uniform();
    switch (s.response_law) {
      case ResponseLaw::trunc_normal:
        y[i] = trunc_normal_draw(lin, s.sigma, s.trunc_lo, s.trunc_hi, u);
        break;
      case ResponseLaw::normal:
        y[i] = lin + s.sigma * std_normal_quantile(u);
        break;
      case ResponseLaw::trunc_gamma: {
        const double scale = 1.0 / (s.shape * lin);
        const double top = boost::math::gamma_p(s.shape, s.trunc_hi / scale);
        y[i] = std::min(scale * boost::math::gamma_p_inv(s.shape, u * top), s.trunc_hi);
        break;
      }
      case ResponseLaw::gamma:
        y[i] = boost::math::gamma_p_inv(s.shape, u) / (s.shape * lin);
        break;
      case ResponseLaw::bernoulli:
        y[i] = u < 1.0 / (1.0 + std::exp(-lin)) ? 1.0 : 0.0;
        break;
      case ResponseLaw::poisson:
        y[i] = poisson_draw(std::exp(lin), u);
        break;
      case ResponseLaw::negbinomial:
        y[i] = negbinomial_draw(std::exp(lin), s.nb_size, u);
        break;
    }
  }

  Support support;
  const int quad = s.fit_config.quad_nodes > 0 ? s.fit_config.quad_nodes : 201;
  switch (s.response_law) {
    case ResponseLaw::trunc_normal:
      support = Support::continuous(s.trunc_lo, s.trunc_hi, quad);
      break;
    case ResponseLaw::trunc_gamma:
      support = Support::continuous(0.0, s.trunc_hi, quad);
      break;
    case ResponseLaw::normal:
      support = padded_support(y, 0.05, quad);
      break;
    case ResponseLaw::gamma: {
      support = padded_support(y, 0.05, quad);
      support.lo = std::max(support.lo, 0.0);
      break;
    }
    case ResponseLaw::bernoulli:
      support = Support::discrete_upto(1);
      break;
    case ResponseLaw::poisson:
    case ResponseLaw::negbinomial:
      support = Support::discrete_upto(std::max(1, static_cast<int>(y.maxCoeff())));
      break;
  }
  std::vector<std::string> names;
  for (int k = 0; k < s.p(); ++k) names.push_back("x" + std::to_string(k + 1));
  return Dataset::make(x, std::move(y), support, std::move(names));
}

double true_conditional_variance(const Scenario& s, double nu) {
  if (auto law = exact_law(s)) return law->variance(nu);
  return closed_variance(s, nu);
}

double true_quantile_slope(const Scenario& s, double nu, double tau) {
  if (auto law = exact_law(s)) return law->quantile_slope(nu, tau);
  return closed_qslope(s, nu, tau);
}

TrueEffects true_effects(const Scenario& s, const std::vector<double>& tau_list) {
  s.validate();
  if (!tau_list.empty() && !s.continuous()) {
    throw Error(ErrorKind::unsupported, "quantile effects need a continuous response");
  }
  TrueEffects t;
  t.beta = s.natural_beta();
  t.tau = tau_list;
  std::vector<double> nu;
  std::vector<double> wt;
  index_rule(s, t.beta, nu, wt);
  const auto law = exact_law(s);
  double cv = 0.0;
  std::vector<double> qs(tau_list.size(), 0.0);
  for (std::size_t j = 0; j < nu.size(); ++j) {
    cv += wt[j] * (law ? law->variance(nu[j]) : closed_variance(s, nu[j]));
    for (std::size_t k = 0; k < tau_list.size(); ++k) {
      qs[k] += wt[j] * (law ? law->quantile_slope(nu[j], tau_list[k])
                            : closed_qslope(s, nu[j], tau_list[k]));
    }
  }
  t.mean_condvar = cv;
  t.xi = t.beta * cv;
  t.mean_qprime = qs;
  for (double q : qs) t.eta.push_back(t.beta * q);
  return t;
}

const MethodSummary& SimulationReport::method(Method m) const {
  for (const auto& ms : methods) {
    if (ms.method == m) return ms;
  }
  throw Error(ErrorKind::config, std::string("method ") + to_string(m) + " not in report");
}

const EstimandSummary& SimulationReport::row(Method m, const std::string& estimand) const {
  for (const auto& r : method(m).rows) {
    if (r.estimand == estimand) return r;
  }
  throw Error(ErrorKind::config, "estimand " + estimand + " not in report");
}

SimulationReport run_scenario(const Scenario& s, const std::vector<Method>& methods,
                              const RunOptions& options) {
  s.validate();
  if (methods.empty()) throw Error(ErrorKind::config, "no methods requested");
  SimulationReport report;
  report.scenario = s;
  report.truth = true_effects(s, s.continuous() ? s.tau_list : std::vector<double>{});

  const auto reps = static_cast<std::size_t>(s.replicates);
  std::vector<std::vector<MethodOutcome>> outcomes(reps);
  parallel_for(s.replicates, resolve_workers(options.workers), [&](long r) {
    const Dataset d = generate(s, r);
    std::vector<MethodOutcome> row;
    for (Method m : methods) {
      const bool quantiles = s.continuous() && (m == Method::amle || s.baseline == Family::normal ||
                                                s.baseline == Family::gamma);
      row.push_back(run_method(s, d, m, quantiles));
    }
    outcomes[static_cast<std::size_t>(r)] = std::move(row);
  });

  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    MethodSummary ms;
    ms.method = methods[mi];
    const std::vector<Estimand> list = estimands(s, report.truth, methods[mi]);
    std::vector<const MethodOutcome*> good;
    const MethodOutcome* first_failure = nullptr;
    for (const auto& row : outcomes) {
      const MethodOutcome& o = row[mi];
      if (o.ok) {
        good.push_back(&o);
      } else {
        ++ms.failures;
        if (!first_failure) first_failure = &o;
        if (ms.failure_messages.size() < 5) ms.failure_messages.push_back(o.message);
      }
    }
    if (static_cast<double>(ms.failures) > options.max_failure_rate * s.replicates) {
      std::ostringstream msg;
      msg << to_string(methods[mi]) << ": " << ms.failures << " of " << s.replicates
          << " replicates failed (first: " << first_failure->message << ")";
      throw Error(first_failure->kind, msg.str());
    }
    for (std::size_t e = 0; e < list.size(); ++e) {
      EstimandSummary sum;
      sum.estimand = list[e].name;
      sum.truth = list[e].truth;
      sum.count = static_cast<long>(good.size());
      double mean = 0.0;
      for (const MethodOutcome* o : good) {
        const double est = o->est[e];
        const double se = o->se[e];
        mean += est;
        sum.mean_abs_bias += std::abs(est - sum.truth);
        sum.mean_se += se;
        sum.coverage += std::abs(est - sum.truth) <= kZ975 * se ? 1.0 : 0.0;
        if (options.keep_estimates) {
          sum.estimates.push_back(est);
          sum.ses.push_back(se);
        }
      }
      const double cnt = static_cast<double>(good.size());
      if (cnt > 0) {
        mean /= cnt;
        sum.mean_abs_bias /= cnt;
        sum.mean_se /= cnt;
        sum.coverage /= cnt;
      } else {
        sum.mean_abs_bias = sum.mean_se = sum.coverage = kNaN;
      }
      if (good.size() >= 2) {
        double ss = 0.0;
        for (const MethodOutcome* o : good) ss += (o->est[e] - mean) * (o->est[e] - mean);
        sum.sd_sim = std::sqrt(ss / (cnt - 1.0));
      } else {
        sum.sd_sim = kNaN;
      }
      ms.rows.push_back(std::move(sum));
    }
    report.methods.push_back(std::move(ms));
  }
  return report;
}

std::string report_json(const SimulationReport& report, int indent) {
  ojson j;
  j["scenario"] = scenario_json(report.scenario);
  ojson truth;
  truth["beta"] = vector_json(report.truth.beta);
  truth["xi"] = vector_json(report.truth.xi);
  ojson eta = ojson::array();
  for (std::size_t k = 0; k < report.truth.tau.size(); ++k) {
    eta.push_back({{"tau", report.truth.tau[k]}, {"value", vector_json(report.truth.eta[k])}});
  }
  truth["eta"] = eta;
  j["truth"] = truth;
  ojson methods = ojson::array();
  for (const auto& ms : report.methods) {
    ojson m;
    m["method"] = to_string(ms.method);
    m["failures"] = ms.failures;
    m["failure_messages"] = ms.failure_messages;
    ojson rows = ojson::array();
    for (const auto& r : ms.rows) {
      ojson row;
      row["estimand"] = r.estimand;
      row["truth"] = r.truth;
      row["abs_bias"] = r.mean_abs_bias;
      // NaN is written as null: undefined with fewer than two replicates.
      row["sd_sim"] = r.sd_sim;
      row["mean_se"] = r.mean_se;
      row["coverage"] = r.coverage;
      row["count"] = r.count;
      if (!r.estimates.empty()) {
        row["estimates"] = r.estimates;
        row["se"] = r.ses;
      }
      rows.push_back(std::move(row));
    }
    m["rows"] = std::move(rows);
    methods.push_back(std::move(m));
  }
  j["methods"] = std::move(methods);
  return j.dump(indent);
}

std::string report_table(const SimulationReport& report) {
  auto cell = [](double v) {
    if (!std::isfinite(v)) return std::string("     NA");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%7.3f", v);
    return std::string(buf);
  };
  std::ostringstream os;
  const Scenario& s = report.scenario;
  os << "scenario " << s.name << "  n=" << s.n << "  replicates=" << s.replicates
     << "  seed=" << s.seed << "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-12s %8s", "estimand", "truth");
  os << buf;
  for (const auto& ms : report.methods) {
    std::snprintf(buf, sizeof buf, " | %-5s %7s %7s %7s %7s", to_string(ms.method), "|bias|",
                  "sd_sim", "se_est", "cover");
    os << buf;
  }
  os << "\n";
  // Rows follow the first method's estimand order; missing rows are blank.
  std::vector<std::string> order;
  for (const auto& ms : report.methods) {
    for (const auto& r : ms.rows) {
      if (std::find(order.begin(), order.end(), r.estimand) == order.end()) order.push_back(r.estimand);
    }
  }
  for (const auto& name : order) {
    double truth = kNaN;
    std::string line;
    for (const auto& ms : report.methods) {
      const auto it = std::find_if(ms.rows.begin(), ms.rows.end(),
                                   [&](const EstimandSummary& r) { return r.estimand == name; });
      if (it == ms.rows.end()) {
        line += " |      " + std::string(4 * 8 - 1, ' ');
        continue;
      }
      truth = it->truth;
      line += " |      " + cell(it->mean_abs_bias) + " " + cell(it->sd_sim) + " " +
              cell(it->mean_se) + " " + cell(it->coverage);
    }
    std::snprintf(buf, sizeof buf, "%-12s %8.4f", name.c_str(), truth);
    os << buf << line << "\n";
  }
  for (const auto& ms : report.methods) {
    os << to_string(ms.method) << " failures: " << ms.failures << "\n";
  }
  return os.str();
}

Scenario scenario_from_json(const std::string& text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, std::string("scenario file: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::parse, "scenario file must hold a JSON object");
  Scenario s;
  try {
    if (j.contains("preset")) {
      s = preset(j.at("preset").get<std::string>());
    } else if (!j.contains("response_law") || !j.contains("beta")) {
      throw Error(ErrorKind::config, "scenario needs either 'preset' or 'response_law' and 'beta'");
    }
    for (const auto& [key, v] : j.items()) {
      if (key == "preset") continue;
      if (key == "name") s.name = v.get<std::string>();
      else if (key == "covariate_law") {
        const auto name = v.get<std::string>();
        if (name == "mvnormal") s.covariate_law = CovariateLaw::mvnormal;
        else if (name == "uniform") s.covariate_law = CovariateLaw::uniform;
        else throw Error(ErrorKind::config, "unknown covariate_law '" + name + "'");
      } else if (key == "response_law") {
        const auto name = v.get<std::string>();
        const auto it = response_names().find(name);
        if (it == response_names().end()) throw Error(ErrorKind::config, "unknown response_law '" + name + "'");
        s.response_law = it->second;
      } else if (key == "beta") {
        const auto b = v.get<std::vector<double>>();
        s.beta = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
      } else if (key == "rho") s.rho = v.get<double>();
      else if (key == "unif_lo") s.unif_lo = v.get<double>();
      else if (key == "unif_hi") s.unif_hi = v.get<double>();
      else if (key == "sigma") s.sigma = v.get<double>();
      else if (key == "trunc_lo") s.trunc_lo = v.get<double>();
      else if (key == "trunc_hi") s.trunc_hi = v.get<double>();
      else if (key == "shape") s.shape = v.get<double>();
      else if (key == "nb_size") s.nb_size = v.get<double>();
      else if (key == "n") s.n = v.get<long>();
      else if (key == "replicates") s.replicates = v.get<int>();
      else if (key == "tau") s.tau_list = v.get<std::vector<double>>();
      else if (key == "seed") s.seed = v.get<std::uint64_t>();
      else if (key == "baseline") s.baseline = family_from_string(v.get<std::string>());
      else if (key == "baseline_intercept") s.baseline_intercept = v.get<bool>();
      else if (key == "knots") s.fit_config.interior_knots = v.get<int>();
      else if (key == "quad_nodes") s.fit_config.quad_nodes = v.get<int>();
      else throw Error(ErrorKind::config, "unknown scenario key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, std::string("scenario file: ") + e.what());
  }
  if (s.name.empty()) s.name = "custom";
  s.validate();
  return s;
}

}  // namespace semfx
