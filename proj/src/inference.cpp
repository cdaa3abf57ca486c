#include "semfx/inference.hpp"

#include <cmath>
#include <sstream>

#include "semfx/error.hpp"

namespace semfx {

Eigen::MatrixXd SigmaBlocks::assembled() const {
  const auto p = s11.rows();
  const auto mf = s22.rows();
  Eigen::MatrixXd out(p + mf, p + mf);
  out.topLeftCorner(p, p) = s11;
  out.topRightCorner(p, mf) = s12;
  out.bottomLeftCorner(mf, p) = s12.transpose();
  out.bottomRightCorner(mf, mf) = s22;
  return out;
}

Eigen::MatrixXd SigmaBlocks::inverse() const {
  const Eigen::MatrixXd full = assembled();
  return full.ldlt().solve(Eigen::MatrixXd::Identity(full.rows(), full.cols()));
}

SigmaBlocks sigma_blocks(const FittedModel& fit, const Dataset& data) {
  const TiltFamily fam = fit.family();
  const int p = data.p();
  const int mf = fit.carrier->free_size();
  const long n = data.n();
  const Eigen::VectorXd eta = data.x * fit.beta;

  SigmaBlocks sb;
  sb.n = n;
  sb.s11 = Eigen::MatrixXd::Zero(p, p);
  sb.s12 = Eigen::MatrixXd::Zero(p, mf);
  sb.s22 = Eigen::MatrixXd::Zero(mf, mf);
  for (long i = 0; i < n; ++i) {
    const ConditionalState st = fam.moments(eta[i], true);
    const Eigen::VectorXd xi = data.x.row(i).transpose();
    sb.s11 += st.var * xi * xi.transpose();
    sb.s12 += xi * st.cov_yb.tail(mf).transpose();
    sb.s22 += st.var_b.bottomRightCorner(mf, mf);
  }
  sb.s11 /= static_cast<double>(n);
  sb.s12 /= static_cast<double>(n);
  sb.s22 /= static_cast<double>(n);

  const Eigen::LDLT<Eigen::MatrixXd> s22f(sb.s22);
  if (s22f.info() != Eigen::Success) {
    throw Error(ErrorKind::singular_information, "carrier block of the information is singular");
  }
  sb.sstar = sb.s11 - sb.s12 * s22f.solve(sb.s12.transpose());
  sb.sstar = 0.5 * (sb.sstar + sb.sstar.transpose());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sb.sstar);
  const double top = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
  if (es.eigenvalues().minCoeff() <= 1e-10 * top) {
    std::ostringstream msg;
    msg << "Schur complement of the information is not positive definite (min eigenvalue "
        << es.eigenvalues().minCoeff() << ")";
    throw Error(ErrorKind::singular_information, msg.str());
  }
  sb.sigma_beta = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                  es.eigenvectors().transpose();
  return sb;
}

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// plug-in (1/n) variance
double var_of(const std::vector<double>& v, double mean) {
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size());
}

Eigen::MatrixXd sandwich(const Eigen::MatrixXd& a1, const Eigen::MatrixXd& a2, const SigmaBlocks& sb,
                         const Eigen::VectorXd& beta, double extra) {
  Eigen::MatrixXd a(a1.rows(), a1.cols() + a2.cols());
  a << a1, a2;
  const Eigen::MatrixXd full = sb.assembled();
  Eigen::MatrixXd out = a * full.ldlt().solve(a.transpose()) + beta * beta.transpose() * extra;
  return 0.5 * (out + out.transpose());
}

}  // namespace

XiVariance var_xi(const FittedModel& fit, const Dataset& data, const SigmaBlocks& blocks) {
  const TiltFamily fam = fit.family();
  const int p = data.p();
  const int mf = fit.carrier->free_size();
  const long n = data.n();
  const Eigen::VectorXd eta = data.x * fit.beta;

  std::vector<double> v(static_cast<std::size_t>(n));
  Eigen::VectorXd third_x = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd y2b = Eigen::VectorXd::Zero(mf);
  for (long i = 0; i < n; ++i) {
    const ConditionalState st = fam.moments(eta[i]);
    v[static_cast<std::size_t>(i)] = st.var;
    third_x += st.third * data.x.row(i).transpose();
    y2b += st.cov_y2b.tail(mf);
  }
  third_x /= static_cast<double>(n);
  y2b /= static_cast<double>(n);

  XiVariance out;
  out.parts.mean_condvar = mean_of(v);
  out.parts.var_of_condvar = var_of(v, out.parts.mean_condvar);
  out.parts.a1 = out.parts.mean_condvar * Eigen::MatrixXd::Identity(p, p) + fit.beta * third_x.transpose();
  out.parts.a2 = fit.beta * y2b.transpose();
  out.sigma = sandwich(out.parts.a1, out.parts.a2, blocks, fit.beta, out.parts.var_of_condvar);
  return out;
}

EtaVariance var_eta(const FittedModel& fit, const Dataset& data, const SigmaBlocks& blocks, double tau) {
  if (fit.carrier->discrete()) {
    throw Error(ErrorKind::unsupported, "quantile effects need a continuous response");
  }
  const TiltFamily fam = fit.family();
  const int p = data.p();
  const int mf = fit.carrier->free_size();
  const long n = data.n();
  const Eigen::VectorXd eta = data.x * fit.beta;
  const double width = fit.carrier->hi() - fit.carrier->lo();

  std::vector<double> qp(static_cast<std::size_t>(n));
  Eigen::VectorXd qdd_x = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd dqp = Eigen::VectorXd::Zero(mf);
  for (long i = 0; i < n; ++i) {
    const QuantileLocal ql = fam.quantile(eta[i], tau);
    if (ql.density * width < 1e-12) {
      throw Error(ErrorKind::ill_conditioned_quantile,
                  "conditional density at the quantile is numerically zero (observation " +
                      std::to_string(i + 1) + ")");
    }
    qp[static_cast<std::size_t>(i)] = ql.qprime;
    qdd_x += ql.qdprime * data.x.row(i).transpose();
    dqp += ql.dqprime_dgamma.tail(mf);
  }
  qdd_x /= static_cast<double>(n);
  dqp /= static_cast<double>(n);

  EtaVariance out;
  out.parts.tau = tau;
  out.parts.mean_qprime = mean_of(qp);
  out.parts.var_of_qprime = var_of(qp, out.parts.mean_qprime);
  out.parts.c1 = out.parts.mean_qprime * Eigen::MatrixXd::Identity(p, p) + fit.beta * qdd_x.transpose();
  out.parts.c2 = fit.beta * dqp.transpose();
  out.sigma = sandwich(out.parts.c1, out.parts.c2, blocks, fit.beta, out.parts.var_of_qprime);
  return out;
}

void wald(const Eigen::VectorXd& point, const Eigen::MatrixXd& sigma, long n, EffectEstimate& out) {
  const auto p = point.size();
  out.point = point;
  out.se.resize(p);
  out.ci_lo.resize(p);
  out.ci_hi.resize(p);
  out.p_value.resize(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    double d = sigma(k, k);
    if (d < 0.0) {
      if (d < -1e-12) {
        throw Error(ErrorKind::numeric, "negative variance on the diagonal of the covariance");
      }
      out.warnings.push_back("clamped a slightly negative variance to zero");
      d = 0.0;
    }
    const double se = std::sqrt(d / static_cast<double>(n));
    out.se[k] = se;
    out.ci_lo[k] = point[k] - kZ975 * se;
    out.ci_hi[k] = point[k] + kZ975 * se;
    if (se > 0.0) {
      out.p_value[k] = std::erfc(std::abs(point[k] / se) / std::sqrt(2.0));
    } else {
      out.p_value[k] = point[k] == 0.0 ? 1.0 : 0.0;
    }
  }
}

EffectEstimate estimate_beta(const FittedModel& fit, const Dataset& data, const SigmaBlocks& blocks) {
  EffectEstimate e;
  e.kind = EffectEstimate::Kind::coefficient;
  e.names = data.names;
  wald(fit.beta, blocks.sigma_beta, data.n(), e);
  return e;
}

EffectEstimate estimate_xi(const FittedModel& fit, const Dataset& data, const SigmaBlocks& blocks) {
  const XiVariance v = var_xi(fit, data, blocks);
  EffectEstimate e;
  e.kind = EffectEstimate::Kind::marginal;
  e.names = data.names;
  wald(fit.beta * v.parts.mean_condvar, v.sigma, data.n(), e);
  return e;
}

EffectEstimate estimate_eta(const FittedModel& fit, const Dataset& data, const SigmaBlocks& blocks,
                            double tau) {
  const EtaVariance v = var_eta(fit, data, blocks, tau);
  EffectEstimate e;
  e.kind = EffectEstimate::Kind::quantile;
  e.tau = tau;
  e.names = data.names;
  wald(fit.beta * v.parts.mean_qprime, v.sigma, data.n(), e);
  return e;
}

InfoCriteria aic_bic(double loglik, int df, double n) {
  InfoCriteria ic;
  ic.df = df;
  ic.aic = -2.0 * loglik + 2.0 * df;
  ic.bic = -2.0 * loglik + std::log(n) * df;
  return ic;
}

InfoCriteria aic_bic(const FittedModel& fit) { return aic_bic(fit.loglik, fit.free_params(), static_cast<double>(fit.n)); }

std::vector<double> support_grid(const FittedModel& fit, int size) {
  if (size < 2) throw Error(ErrorKind::config, "curve grid needs at least two points");
  const double lo = fit.carrier->lo();
  const double hi = fit.carrier->hi();
  std::vector<double> g(static_cast<std::size_t>(size));
  for (int i = 0; i < size; ++i) g[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (size - 1);
  g.back() = hi;
  return g;
}

std::vector<CurvePoint> curve_band(const FittedModel& fit, const SigmaBlocks& blocks,
                                   const std::vector<double>& grid) {
  if (fit.carrier->discrete()) {
    throw Error(ErrorKind::unsupported, "the carrier curve needs a continuous response");
  }
  const int mf = fit.carrier->free_size();
  const Eigen::MatrixXd v =
      blocks.inverse().bottomRightCorner(mf, mf) / static_cast<double>(blocks.n);
  std::vector<CurvePoint> out;
  out.reserve(grid.size());
  for (double y : grid) {
    const Eigen::VectorXd b = fit.carrier->eval(y).tail(mf);
    CurvePoint pt;
    pt.y = y;
    pt.c = fit.carrier->carrier(y, fit.gamma);
    const double half = kZ975 * std::sqrt(std::max(0.0, b.dot(v * b)));
    pt.lo = pt.c - half;
    pt.hi = pt.c + half;
    out.push_back(pt);
  }
  return out;
}

}  // namespace semfx
