#include "semfx/baselines.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "semfx/error.hpp"
#include "semfx/inference.hpp"

namespace semfx {

const char* to_string(Family f) {
  switch (f) {
    case Family::normal: return "normal";
    case Family::gamma: return "gamma";
    case Family::bernoulli: return "bernoulli";
    case Family::poisson: return "poisson";
  }
  return "unknown";
}

Family family_from_string(const std::string& name) {
  if (name == "normal") return Family::normal;
  if (name == "gamma") return Family::gamma;
  if (name == "bernoulli" || name == "logistic") return Family::bernoulli;
  if (name == "poisson") return Family::poisson;
  throw Error(ErrorKind::config, "unknown parametric family '" + name + "'");
}

namespace {

Eigen::MatrixXd design(const Dataset& data, bool intercept) {
  const Eigen::MatrixXd raw = data.raw_x();
  if (!intercept) return raw;
  Eigen::MatrixXd z(raw.rows(), raw.cols() + 1);
  z.col(0).setOnes();
  z.rightCols(raw.cols()) = raw;
  return z;
}

Eigen::MatrixXd inverse_spd(const Eigen::MatrixXd& info, const char* what) {
  const Eigen::LDLT<Eigen::MatrixXd> f(info);
  if (f.info() != Eigen::Success || !f.isPositive() ||
      f.vectorD().minCoeff() <= 1e-13 * f.vectorD().cwiseAbs().maxCoeff()) {
    throw Error(ErrorKind::singular_information, std::string(what) + ": information matrix is singular");
  }
  return f.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
}

void fit_normal(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, ParametricFit& pf) {
  const long n = y.size();
  const Eigen::MatrixXd ztz = z.transpose() * z;
  const Eigen::LDLT<Eigen::MatrixXd> f(ztz);
  if (f.info() != Eigen::Success || !f.isPositive()) {
    throw Error(ErrorKind::singular_information, "normal baseline: design is rank deficient");
  }
  pf.coef = f.solve(z.transpose() * y);
  const double rss = (y - z * pf.coef).squaredNorm();
  const double s2 = rss / static_cast<double>(n);
  if (!(s2 > 0.0)) throw Error(ErrorKind::degenerate_input, "normal baseline: perfect fit");
  pf.dispersion = std::sqrt(s2);
  pf.loglik = -0.5 * static_cast<double>(n) * (std::log(2.0 * std::numbers::pi * s2) + 1.0);

  const auto k = z.cols();
  pf.phi.resize(k + 1);
  pf.phi << pf.coef, s2;
  pf.phi_cov = Eigen::MatrixXd::Zero(k + 1, k + 1);
  pf.phi_cov.topLeftCorner(k, k) = s2 * inverse_spd(ztz, "normal baseline");
  pf.phi_cov(k, k) = 2.0 * s2 * s2 / static_cast<double>(n);
}

// Canonical-link Newton for logistic and Poisson regression.
void fit_canonical(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, Family fam, ParametricFit& pf) {
  const long n = y.size();
  const auto k = z.cols();
  auto mean_of = [&](double t) { return fam == Family::bernoulli ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t); };
  auto loglik = [&](const Eigen::VectorXd& c) {
    const Eigen::VectorXd t = z * c;
    double s = 0.0;
    for (long i = 0; i < n; ++i) {
      if (fam == Family::bernoulli) {
        s += y[i] * t[i] - (t[i] > 0 ? t[i] + std::log1p(std::exp(-t[i])) : std::log1p(std::exp(t[i])));
      } else {
        s += y[i] * t[i] - std::exp(t[i]) - std::lgamma(y[i] + 1.0);
      }
    }
    return s;
  };

  Eigen::VectorXd c = Eigen::VectorXd::Zero(k);
  if (pf.intercept) {
    const double ybar = y.mean();
    c[0] = fam == Family::bernoulli ? std::log(ybar / (1.0 - ybar)) : std::log(ybar);
  }
  double cur = loglik(c);
  Eigen::MatrixXd info;
  bool done = false;
  for (int it = 0; it < 200 && !done; ++it) {
    pf.iterations = it + 1;
    const Eigen::VectorXd t = z * c;
    Eigen::VectorXd mu(n), w(n);
    for (long i = 0; i < n; ++i) {
      mu[i] = mean_of(t[i]);
      w[i] = fam == Family::bernoulli ? mu[i] * (1.0 - mu[i]) : mu[i];
    }
    const Eigen::VectorXd score = z.transpose() * (y - mu);
    info = z.transpose() * w.asDiagonal() * z;
    const Eigen::VectorXd step = info.ldlt().solve(score);
    double s = 1.0;
    double next = cur;
    Eigen::VectorXd trial;
    for (; s > 1e-10; s *= 0.5) {
      trial = c + s * step;
      next = loglik(trial);
      if (std::isfinite(next) && next >= cur) break;
    }
    if (!(s > 1e-10)) break;
    c = trial;
    if (c.cwiseAbs().maxCoeff() > 1e3) {
      throw Error(ErrorKind::divergence, std::string(to_string(fam)) + " baseline: coefficients diverge");
    }
    done = std::abs(next - cur) <= 1e-12 * std::max(1.0, std::abs(cur)) &&
           step.cwiseAbs().maxCoeff() < 1e-10 * (1.0 + c.cwiseAbs().maxCoeff());
    cur = next;
  }
  // information at the final point
  const Eigen::VectorXd t = z * c;
  Eigen::VectorXd w(n);
  for (long i = 0; i < n; ++i) {
    const double m = mean_of(t[i]);
    w[i] = fam == Family::bernoulli ? m * (1.0 - m) : m;
  }
  info = z.transpose() * w.asDiagonal() * z;
  pf.coef = c;
  pf.loglik = cur;
  pf.phi = c;
  pf.phi_cov = inverse_spd(info, to_string(fam));
}

// Gamma regression with inverse mean link mu = 1 / z^T c and shape alpha.
void fit_gamma(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, ParametricFit& pf) {
  const long n = y.size();
  const auto k = z.cols();
  const Eigen::VectorXd logy = y.array().log().matrix();

  auto loglik = [&](const Eigen::VectorXd& c, double a) {
    const Eigen::VectorXd t = z * c;
    if (t.minCoeff() <= 0.0 || !(a > 0.0)) return -std::numeric_limits<double>::infinity();
    double s = 0.0;
    for (long i = 0; i < n; ++i) {
      // log mu = -log t
      s += a * std::log(a * t[i]) - std::lgamma(a) + (a - 1.0) * logy[i] - a * y[i] * t[i];
    }
    return s;
  };

  // start: least squares of 1/ybar on the design, method-of-moments shape
  const double ybar = y.mean();
  const double vy = (y.array() - ybar).square().mean();
  Eigen::VectorXd c = z.colPivHouseholderQr().solve(Eigen::VectorXd::Constant(n, 1.0 / ybar));
  if ((z * c).minCoeff() <= 0.0) {
    throw Error(ErrorKind::domain, "gamma baseline: no feasible start for the inverse link");
  }
  double a = std::max(ybar * ybar / std::max(vy, 1e-300), 0.1);
  double cur = loglik(c, a);

  auto derivatives = [&](const Eigen::VectorXd& cc, double aa, Eigen::VectorXd& g, Eigen::MatrixXd& h) {
    const Eigen::VectorXd t = z * cc;
    g = Eigen::VectorXd::Zero(k + 1);
    h = Eigen::MatrixXd::Zero(k + 1, k + 1);
    const double psi = boost::math::digamma(aa);
    const double psi1 = boost::math::trigamma(aa);
    for (long i = 0; i < n; ++i) {
      const double mu = 1.0 / t[i];
      const auto zi = z.row(i).transpose();
      g.head(k) += -aa * (y[i] - mu) * zi;
      g[k] += std::log(aa) - std::log(mu) + 1.0 - psi + logy[i] - y[i] / mu;
      h.topLeftCorner(k, k) += -aa * mu * mu * zi * zi.transpose();
      h.col(k).head(k) += -(y[i] - mu) * zi;
      h(k, k) += 1.0 / aa - psi1;
    }
    h.row(k).head(k) = h.col(k).head(k).transpose();
  };

  Eigen::VectorXd g;
  Eigen::MatrixXd h;
  bool done = false;
  for (int it = 0; it < 300 && !done; ++it) {
    pf.iterations = it + 1;
    derivatives(c, a, g, h);
    Eigen::VectorXd step = (-h).ldlt().solve(g);
    if (!step.allFinite() || g.dot(step) <= 0.0) step = g / std::max(1.0, (-h).diagonal().maxCoeff());
    double s = 1.0;
    double next = cur;
    Eigen::VectorXd tc;
    double ta = a;
    for (; s > 1e-12; s *= 0.5) {
      tc = c + s * step.head(k);
      ta = a + s * step[k];
      next = loglik(tc, ta);
      if (std::isfinite(next) && next >= cur) break;
    }
    if (!(s > 1e-12)) break;
    done = std::abs(next - cur) <= 1e-13 * std::max(1.0, std::abs(cur)) &&
           (s * step).cwiseAbs().maxCoeff() < 1e-9 * (1.0 + c.cwiseAbs().maxCoeff() + a);
    c = tc;
    a = ta;
    cur = next;
  }
  derivatives(c, a, g, h);
  for (int k2 = 0; k2 < 5; ++k2) {
    const Eigen::VectorXd step = (-h).ldlt().solve(g);
    const Eigen::VectorXd tc = c + step.head(k);
    const double ta = a + step[k];
    if (!std::isfinite(loglik(tc, ta))) break;
    Eigen::VectorXd g2;
    Eigen::MatrixXd h2;
    derivatives(tc, ta, g2, h2);
    if (!(g2.cwiseAbs().maxCoeff() < g.cwiseAbs().maxCoeff())) break;
    c = tc;
    a = ta;
    g = g2;
    h = h2;
    cur = loglik(c, a);
  }
  pf.coef = c;
  pf.dispersion = a;
  pf.loglik = cur;
  pf.phi.resize(k + 1);
  pf.phi << c, a;
  pf.phi_cov = inverse_spd(-h, "gamma baseline");
}

// Natural coefficient, per-observation mean slopes and quantile slopes as functions of phi.
struct Maps {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> beta;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> mean_slopes;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&, double)> quantile_slopes;
};

Maps family_maps(const ParametricFit& pf, const Eigen::MatrixXd& z) {
  const int off = pf.intercept ? 1 : 0;
  const auto k = z.cols();
  const auto p = k - off;
  Maps m;
  switch (pf.family) {
    case Family::normal:
      m.beta = [=](const Eigen::VectorXd& phi) -> Eigen::VectorXd { return phi.segment(off, p) / phi[k]; };
      m.mean_slopes = [=](const Eigen::VectorXd& phi) -> Eigen::MatrixXd {
        return phi.segment(off, p).transpose().replicate(z.rows(), 1);
      };
      m.quantile_slopes = [m](const Eigen::VectorXd& phi, double) { return m.mean_slopes(phi); };
      break;
    case Family::gamma:
      m.beta = [=](const Eigen::VectorXd& phi) -> Eigen::VectorXd { return -phi[k] * phi.segment(off, p); };
      m.mean_slopes = [=](const Eigen::VectorXd& phi) -> Eigen::MatrixXd {
        const Eigen::VectorXd t = z * phi.head(k);
        const Eigen::VectorXd mu2 = t.array().inverse().square().matrix();
        return -mu2 * phi.segment(off, p).transpose();
      };
      m.quantile_slopes = [=](const Eigen::VectorXd& phi, double tau) -> Eigen::MatrixXd {
        const double a = phi[k];
        const double g = boost::math::quantile(boost::math::gamma_distribution<double>(a, 1.0), tau);
        const Eigen::VectorXd t = z * phi.head(k);
        const Eigen::VectorXd mu2 = t.array().inverse().square().matrix();
        return -(g / a) * mu2 * phi.segment(off, p).transpose();
      };
      break;
    case Family::bernoulli:
    case Family::poisson: {
      const bool logit = pf.family == Family::bernoulli;
      m.beta = [=](const Eigen::VectorXd& phi) -> Eigen::VectorXd { return phi.segment(off, p); };
      m.mean_slopes = [=](const Eigen::VectorXd& phi) -> Eigen::MatrixXd {
        const Eigen::VectorXd t = z * phi.head(k);
        Eigen::VectorXd v(t.size());
        for (Eigen::Index i = 0; i < t.size(); ++i) {
          if (logit) {
            const double pr = 1.0 / (1.0 + std::exp(-t[i]));
            v[i] = pr * (1.0 - pr);
          } else {
            v[i] = std::exp(t[i]);
          }
        }
        return v * phi.segment(off, p).transpose();
      };
      m.quantile_slopes = [=](const Eigen::VectorXd&, double) -> Eigen::MatrixXd {
        throw Error(ErrorKind::unsupported, std::string("quantile effects are not defined for the ") +
                                                to_string(pf.family) + " family");
      };
      break;
    }
  }
  return m;
}

Eigen::MatrixXd jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                         const Eigen::VectorXd& phi) {
  const Eigen::VectorXd f0 = f(phi);
  Eigen::MatrixXd j(f0.size(), phi.size());
  for (Eigen::Index k = 0; k < phi.size(); ++k) {
    const double h = 1e-6 * std::max(1.0, std::abs(phi[k]));
    Eigen::VectorXd up = phi, dn = phi;
    up[k] += h;
    dn[k] -= h;
    j.col(k) = (f(up) - f(dn)) / (2.0 * h);
  }
  return j;
}

// Average of per-observation slopes with delta-method covariance plus the
// sampling variability of the covariate average.
EffectEstimate average_effect(const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& slopes,
                              const ParametricFit& pf, long n) {
  const Eigen::MatrixXd s = slopes(pf.phi);
  const Eigen::VectorXd point = s.colwise().mean().transpose();
  const Eigen::MatrixXd centered = s.rowwise() - point.transpose();
  const Eigen::MatrixXd between = centered.transpose() * centered / static_cast<double>(n);
  const Eigen::MatrixXd j = jacobian(
      [&](const Eigen::VectorXd& phi) -> Eigen::VectorXd { return slopes(phi).colwise().mean().transpose(); },
      pf.phi);
  const Eigen::MatrixXd cov = j * pf.phi_cov * j.transpose() + between / static_cast<double>(n);
  EffectEstimate e;
  wald(point, static_cast<double>(n) * 0.5 * (cov + cov.transpose()), n, e);
  return e;
}

}  // namespace

ParametricFit fit_parametric(const Dataset& data, Family family, bool intercept) {
  ParametricFit pf;
  pf.family = family;
  pf.intercept = intercept;
  pf.n = data.n();
  const Eigen::VectorXd& y = data.y;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double v = y[i];
    bool ok = true;
    switch (family) {
      case Family::normal: break;
      case Family::gamma: ok = v > 0.0; break;
      case Family::bernoulli: ok = v == 0.0 || v == 1.0; break;
      case Family::poisson: ok = v >= 0.0 && v == std::floor(v); break;
    }
    if (!ok) {
      std::ostringstream msg;
      msg << "response " << v << " (row " << i + 1 << ") is invalid for the " << to_string(family) << " family";
      throw Error(ErrorKind::domain, msg.str());
    }
  }

  const Eigen::MatrixXd z = design(data, intercept);
  switch (family) {
    case Family::normal: fit_normal(z, y, pf); break;
    case Family::gamma: fit_gamma(z, y, pf); break;
    case Family::bernoulli:
    case Family::poisson: fit_canonical(z, y, family, pf); break;
  }
  pf.df = static_cast<int>(pf.phi.size());
  pf.beta = family_maps(pf, z).beta(pf.phi);
  return pf;
}

Eigen::MatrixXd parametric_mean_slopes(const ParametricFit& pfit, const Dataset& data) {
  return family_maps(pfit, design(data, pfit.intercept)).mean_slopes(pfit.phi);
}

std::vector<EffectEstimate> parametric_effects(const ParametricFit& pfit, const Dataset& data,
                                               const std::vector<double>& tau_list) {
  const Eigen::MatrixXd z = design(data, pfit.intercept);
  const Maps maps = family_maps(pfit, z);
  const long n = data.n();
  std::vector<EffectEstimate> out;

  EffectEstimate b;
  const Eigen::MatrixXd jb = jacobian(maps.beta, pfit.phi);
  const Eigen::MatrixXd cb = jb * pfit.phi_cov * jb.transpose();
  wald(pfit.beta, static_cast<double>(n) * 0.5 * (cb + cb.transpose()), n, b);
  b.kind = EffectEstimate::Kind::coefficient;
  b.names = data.names;
  out.push_back(std::move(b));

  EffectEstimate xi = average_effect(maps.mean_slopes, pfit, n);
  xi.kind = EffectEstimate::Kind::marginal;
  xi.names = data.names;
  out.push_back(std::move(xi));

  for (double tau : tau_list) {
    if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorKind::domain, "quantile level must lie in (0, 1)");
    EffectEstimate e = average_effect(
        [&](const Eigen::VectorXd& phi) { return maps.quantile_slopes(phi, tau); }, pfit, n);
    e.kind = EffectEstimate::Kind::quantile;
    e.tau = tau;
    e.names = data.names;
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace semfx
