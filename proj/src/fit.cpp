#include "semfx/fit.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "semfx/error.hpp"

namespace semfx {

Dataset Dataset::make(const Eigen::MatrixXd& x_raw, Eigen::VectorXd y, Support support,
                      std::vector<std::string> names) {
  if (x_raw.rows() != y.size()) throw Error(ErrorKind::config, "covariate rows do not match responses");
  if (y.size() < 2) throw Error(ErrorKind::degenerate_input, "need at least two observations");
  if (x_raw.cols() < 1) throw Error(ErrorKind::config, "need at least one covariate");
  if (!x_raw.allFinite() || !y.allFinite()) throw Error(ErrorKind::domain, "non-finite data");
  if (names.empty()) {
    for (int j = 0; j < x_raw.cols(); ++j) names.push_back("x" + std::to_string(j + 1));
  }
  if (static_cast<Eigen::Index>(names.size()) != x_raw.cols()) {
    throw Error(ErrorKind::config, "covariate names do not match columns");
  }

  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] < support.lo || y[i] > support.hi) {
      std::ostringstream msg;
      msg << "response " << y[i] << " (row " << i + 1 << ") outside support [" << support.lo << ", "
          << support.hi << "]";
      throw Error(ErrorKind::domain, msg.str());
    }
  }

  Dataset d;
  d.x_means = x_raw.colwise().mean().transpose();
  d.x = x_raw.rowwise() - d.x_means.transpose();
  for (int j = 0; j < d.x.cols(); ++j) {
    if (d.x.col(j).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, std::abs(d.x_means[j]))) {
      throw Error(ErrorKind::degenerate_input,
                  "covariate '" + names[static_cast<std::size_t>(j)] +
                      "' is constant; the intercept is absorbed by the carrier");
    }
  }
  d.y = std::move(y);
  d.names = std::move(names);
  d.support = std::move(support);
  return d;
}

Eigen::MatrixXd Dataset::raw_x() const { return x.rowwise() + x_means.transpose(); }

Support padded_support(const Eigen::VectorXd& y, double pad, int quad_nodes) {
  const double lo = y.minCoeff();
  const double hi = y.maxCoeff();
  const double range = hi - lo;
  if (!(range > 0.0)) throw Error(ErrorKind::degenerate_input, "response is constant");
  return Support::continuous(lo - pad * range, hi + pad * range, quad_nodes);
}

LoglikEval loglik_grad_hess(const Dataset& data, const std::shared_ptr<const Carrier>& carrier,
                            const Eigen::VectorXd& beta, const Eigen::VectorXd& gamma,
                            EvalLevel level) {
  const Carrier& c = *carrier;
  const int p = data.p();
  const int m = c.size();
  const int width = c.width();
  const long n = data.n();
  if (beta.size() != p || gamma.size() != m) {
    throw Error(ErrorKind::config, "parameter length does not match data and basis");
  }

  const TiltFamily fam(carrier, gamma);
  const Eigen::VectorXd eta = data.x * beta;
  const auto& ny = c.node_y();
  const std::size_t nodes = ny.size();
  const bool grad = level != EvalLevel::value;
  const bool hess = level == EvalLevel::hessian;

  LoglikEval out;
  Eigen::VectorXd g_beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd b_obs = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd b_exp = Eigen::VectorXd::Zero(m);
  Eigen::MatrixXd h_bb, h_bg, mean_outer;
  std::vector<double> node_mass;
  if (hess) {
    h_bb = Eigen::MatrixXd::Zero(p, p);
    h_bg = Eigen::MatrixXd::Zero(p, m);
    mean_outer = Eigen::MatrixXd::Zero(m, m);
    node_mass.assign(nodes, 0.0);
  }

  NodeLaw law;
  Eigen::VectorXd eb(m), cyb(m);
  double value = 0.0;
  for (long i = 0; i < n; ++i) {
    const double yi = data.y[i];
    fam.node_law(eta[i], law);
    const BasisRow ri = c.row(yi);
    double ci = 0.0;
    for (int k = 0; k < width; ++k) ci += ri.values[static_cast<std::size_t>(k)] * gamma[ri.first + k];
    const double li = yi * eta[i] + ci - law.log_norm;
    if (!std::isfinite(li)) {
      throw NumericError("non-finite log-likelihood contribution at observation " + std::to_string(i + 1), i);
    }
    value += li;
    if (!grad) continue;

    for (int k = 0; k < width; ++k) b_obs[ri.first + k] += ri.values[static_cast<std::size_t>(k)];
    double mu = 0.0;
    for (std::size_t j = 0; j < nodes; ++j) mu += law.p[j] * ny[j];
    eb.setZero();
    if (hess) cyb.setZero();
    double var = 0.0;
    for (std::size_t j = 0; j < nodes; ++j) {
      const double pj = law.p[j];
      const double d = ny[j] - mu;
      var += pj * d * d;
      const BasisRow& r = c.node_row(static_cast<int>(j));
      for (int k = 0; k < width; ++k) {
        const double v = pj * r.values[static_cast<std::size_t>(k)];
        eb[r.first + k] += v;
        if (hess) cyb[r.first + k] += v * d;
      }
      if (hess) node_mass[j] += pj;
    }
    const auto xi = data.x.row(i).transpose();
    g_beta += xi * (yi - mu);
    b_exp += eb;
    if (hess) {
      h_bb.selfadjointView<Eigen::Lower>().rankUpdate(xi, var);
      h_bg.noalias() += xi * cyb.transpose();
      mean_outer.selfadjointView<Eigen::Lower>().rankUpdate(eb, 1.0);
    }
  }
  out.value = value;
  if (!grad) return out;

  const int mf = m - 1;
  out.gradient.resize(p + mf);
  out.gradient.head(p) = g_beta;
  out.gradient.tail(mf) = (b_obs - b_exp).tail(mf);
  if (!hess) return out;

  // sum_i E_i[B B^T] from the aggregated node masses
  Eigen::MatrixXd e_bb = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t j = 0; j < nodes; ++j) {
    const BasisRow& r = c.node_row(static_cast<int>(j));
    for (int a = 0; a < width; ++a) {
      const double va = node_mass[j] * r.values[static_cast<std::size_t>(a)];
      for (int b = 0; b <= a; ++b) e_bb(r.first + a, r.first + b) += va * r.values[static_cast<std::size_t>(b)];
    }
  }
  Eigen::MatrixXd v_bb = e_bb - mean_outer;
  v_bb = v_bb.selfadjointView<Eigen::Lower>();
  h_bb = h_bb.selfadjointView<Eigen::Lower>();

  out.hessian.resize(p + mf, p + mf);
  out.hessian.topLeftCorner(p, p) = -h_bb;
  out.hessian.topRightCorner(p, mf) = -h_bg.rightCols(mf);
  out.hessian.bottomLeftCorner(mf, p) = -h_bg.rightCols(mf).transpose();
  out.hessian.bottomRightCorner(mf, mf) = -v_bb.bottomRightCorner(mf, mf);
  return out;
}

std::shared_ptr<const Carrier> make_carrier(const Dataset& data, const FitConfig& config,
                                            std::vector<std::string>* warnings) {
  const Support& s = data.support;
  if (!s.is_discrete()) {
    const int quad = config.quad_nodes > 0 ? config.quad_nodes : s.quad_nodes;
    std::vector<double> y(data.y.data(), data.y.data() + data.y.size());
    KnotVector knots = build_knots(y, config.order, s.lo, s.hi, config.interior_knots);
    return Carrier::spline(SplineBasis(std::move(knots)), quad);
  }

  std::vector<long> counts(s.levels.size(), 0);
  for (Eigen::Index i = 0; i < data.y.size(); ++i) {
    const auto it = std::lower_bound(s.levels.begin(), s.levels.end(), data.y[i] - 1e-9);
    if (it == s.levels.end() || std::abs(*it - data.y[i]) > 1e-9) {
      std::ostringstream msg;
      msg << "response " << data.y[i] << " (row " << i + 1 << ") is not a level of the discrete support";
      throw Error(ErrorKind::domain, msg.str());
    }
    ++counts[static_cast<std::size_t>(it - s.levels.begin())];
  }
  std::vector<double> kept;
  std::vector<double> dropped;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    (counts[k] > 0 ? kept : dropped).push_back(s.levels[k]);
  }
  if (kept.size() < 2) {
    throw Error(ErrorKind::degenerate_input, "response takes a single level; nothing to fit");
  }
  if (!dropped.empty() && warnings) {
    std::ostringstream msg;
    msg << "collapsed " << dropped.size() << " unobserved level(s) from the support:";
    for (double v : dropped) msg << ' ' << v;
    warnings->push_back(msg.str());
  }
  return Carrier::indicator(std::move(kept));
}

namespace {

// Solve (-H) d = g, adding a ridge when -H is not numerically positive definite.
Eigen::VectorXd newton_direction(const LoglikEval& ev, std::vector<std::string>& warnings) {
  const Eigen::MatrixXd info = -ev.hessian;
  const double scale = std::max(info.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  auto good = [&](const Eigen::LLT<Eigen::MatrixXd>& f) {
    if (f.info() != Eigen::Success) return false;
    const auto d = f.matrixLLT().diagonal();
    return d.minCoeff() > 1e-7 * std::sqrt(scale);
  };
  if (good(llt)) return llt.solve(ev.gradient);
  for (double ridge = 1e-10; ridge <= 1e-2; ridge *= 100.0) {
    Eigen::MatrixXd reg = info;
    reg.diagonal().array() += ridge * scale;
    llt.compute(reg);
    if (good(llt)) {
      if (warnings.empty() || warnings.back().rfind("ridge", 0) != 0) {
        warnings.push_back("ridge-regularized Newton step (information nearly singular)");
      }
      return llt.solve(ev.gradient);
    }
  }
  throw Error(ErrorKind::singular_information, "information matrix is numerically singular");
}

}  // namespace

FittedModel fit_with_carrier(const Dataset& data, std::shared_ptr<const Carrier> carrier,
                             const FitConfig& config, Eigen::VectorXd beta0, Eigen::VectorXd gamma0) {
  if (!(config.tol > 0.0)) throw Error(ErrorKind::config, "tolerance must be positive");
  if (config.max_iter < 1) throw Error(ErrorKind::config, "max_iter must be positive");
  const int p = data.p();
  const int m = carrier->size();
  const int mf = m - 1;
  if (beta0.size() != p || gamma0.size() != m) throw Error(ErrorKind::config, "start has wrong length");
  gamma0[carrier->anchor()] = 0.0;

  FittedModel fm;
  fm.carrier = carrier;
  fm.support = data.support;
  fm.n = data.n();
  if (data.n() <= p + mf) {
    fm.warnings.push_back("n <= number of free parameters; the information may be rank deficient");
  }

  double bound = config.beta_bound;
  if (!(bound > 0.0)) {
    const double xmax = data.x.cwiseAbs().maxCoeff();
    bound = 500.0 / ((carrier->hi() - carrier->lo()) * xmax);
  }

  const double grad_tol = 1e-6 * static_cast<double>(data.n());
  auto split = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& b, Eigen::VectorXd& g) {
    b = theta.head(p);
    g = carrier->expand(theta.tail(mf));
  };

  Eigen::VectorXd theta(p + mf);
  theta.head(p) = beta0;
  theta.tail(mf) = carrier->reduce(gamma0);
  Eigen::VectorXd b, g;
  split(theta, b, g);
  LoglikEval cur = loglik_grad_hess(data, carrier, b, g);

  bool converged = false;
  int iter = 0;
  while (iter < config.max_iter) {
    ++iter;
    const Eigen::VectorXd d = newton_direction(cur, fm.warnings);
    const double slope = cur.gradient.dot(d);
    double t = 1.0;
    bool accepted = false;
    Eigen::VectorXd trial;
    while (t > 1e-12) {
      trial = theta + t * d;
      split(trial, b, g);
      double val = -std::numeric_limits<double>::infinity();
      try {
        val = loglik_grad_hess(data, carrier, b, g, EvalLevel::value).value;
      } catch (const NumericError&) {
      }
      if (std::isfinite(val) && val >= cur.value + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // no ascent left: either at the round-off floor or stuck
      if (cur.gradient.cwiseAbs().maxCoeff() <= grad_tol) {
        converged = true;
        break;
      }
      split(theta, b, g);
      throw NonConvergence("line search failed to increase the log-likelihood", b, g);
    }
    theta = trial;
    if (theta.head(p).cwiseAbs().maxCoeff() > bound) {
      std::ostringstream msg;
      msg << "coefficients diverge (|beta| > " << bound
          << "); the likelihood is monotone in some direction, e.g. separated data";
      throw Error(ErrorKind::divergence, msg.str());
    }
    split(theta, b, g);
    LoglikEval next = loglik_grad_hess(data, carrier, b, g);
    const double change = std::abs(next.value - cur.value);
    const bool small = change < config.tol * std::abs(cur.value) || change == 0.0;
    cur = std::move(next);
    if (small && cur.gradient.cwiseAbs().maxCoeff() < grad_tol) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    split(theta, b, g);
    throw NonConvergence("Newton iteration hit max_iter=" + std::to_string(config.max_iter), b, g);
  }

  // A few undamped steps drive the score to round-off so that restarts agree.
  for (int k = 0; k < config.polish_steps; ++k) {
    const Eigen::VectorXd d = newton_direction(cur, fm.warnings);
    if (d.cwiseAbs().maxCoeff() <= 1e-13 * (1.0 + theta.cwiseAbs().maxCoeff())) break;
    const Eigen::VectorXd trial = theta + d;
    split(trial, b, g);
    LoglikEval next = loglik_grad_hess(data, carrier, b, g);
    if (!(next.value >= cur.value - 1e-12 * std::max(1.0, std::abs(cur.value)))) break;
    if (next.gradient.cwiseAbs().maxCoeff() > cur.gradient.cwiseAbs().maxCoeff()) break;
    theta = trial;
    cur = std::move(next);
  }

  split(theta, fm.beta, fm.gamma);
  fm.loglik = cur.value;
  fm.iterations = iter;
  fm.grad_norm = cur.gradient.cwiseAbs().maxCoeff();
  return fm;
}

FittedModel fit_mle(const Dataset& data, const FitConfig& config) {
  if (data.support.is_discrete()) return fit_discrete(data, config);
  auto carrier = make_carrier(data, config);
  return fit_with_carrier(data, carrier, config, Eigen::VectorXd::Zero(data.p()),
                          Eigen::VectorXd::Zero(carrier->size()));
}

FittedModel fit_discrete(const Dataset& data, const FitConfig& config) {
  if (!data.support.is_discrete()) {
    throw Error(ErrorKind::unsupported, "fit_discrete needs a discrete support");
  }
  std::vector<std::string> warnings;
  auto carrier = make_carrier(data, config, &warnings);
  FittedModel fm = fit_with_carrier(data, carrier, config, Eigen::VectorXd::Zero(data.p()),
                                    Eigen::VectorXd::Zero(carrier->size()));
  fm.warnings.insert(fm.warnings.begin(), warnings.begin(), warnings.end());
  return fm;
}

FittedModel fit(const Dataset& data, const FitConfig& config) {
  return data.support.is_discrete() ? fit_discrete(data, config) : fit_mle(data, config);
}

}  // namespace semfx
