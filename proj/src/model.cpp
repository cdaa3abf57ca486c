#include "semfx/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "semfx/error.hpp"
#include "semfx/quadrature.hpp"

namespace semfx {

Support Support::continuous(double lo, double hi, int quad_nodes) {
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw Error(ErrorKind::domain, "continuous support needs finite lo < hi");
  }
  if (quad_nodes < 8) throw Error(ErrorKind::config, "quadrature needs at least 8 nodes");
  Support s;
  s.kind = Kind::continuous;
  s.lo = lo;
  s.hi = hi;
  s.quad_nodes = quad_nodes;
  return s;
}

Support Support::discrete(std::vector<double> levels) {
  if (levels.size() < 2) throw Error(ErrorKind::domain, "discrete support needs at least two levels");
  for (std::size_t i = 1; i < levels.size(); ++i) {
    if (!(levels[i] > levels[i - 1])) {
      throw Error(ErrorKind::domain, "discrete levels must be strictly increasing");
    }
  }
  Support s;
  s.kind = Kind::discrete;
  s.lo = levels.front();
  s.hi = levels.back();
  s.levels = std::move(levels);
  return s;
}

Support Support::discrete_upto(int m_levels) {
  if (m_levels < 1) throw Error(ErrorKind::domain, "discrete support needs m_levels >= 1");
  std::vector<double> levels(static_cast<std::size_t>(m_levels) + 1);
  for (int k = 0; k <= m_levels; ++k) levels[static_cast<std::size_t>(k)] = k;
  return discrete(std::move(levels));
}

std::shared_ptr<const Carrier> Carrier::spline(SplineBasis basis, int quad_nodes) {
  auto c = std::shared_ptr<Carrier>(new Carrier());
  c->size_ = basis.size();
  c->width_ = basis.order();
  c->lo_ = basis.lo();
  c->hi_ = basis.hi();
  c->breaks_ = basis.knots().breakpoints();
  const QuadratureGrid grid = composite_gauss_legendre(c->breaks_, quad_nodes);
  c->nodes_per_span_ = static_cast<int>(grid.nodes.size()) / (static_cast<int>(c->breaks_.size()) - 1);
  c->node_y_ = grid.nodes;
  c->node_w_ = grid.weights;
  c->node_rows_.reserve(grid.nodes.size());
  for (double y : grid.nodes) c->node_rows_.push_back(basis.row(y));
  c->spline_.emplace(std::move(basis));
  return c;
}

std::shared_ptr<const Carrier> Carrier::indicator(std::vector<double> levels) {
  const Support s = Support::discrete(levels);  // validates
  auto c = std::shared_ptr<Carrier>(new Carrier());
  c->levels_ = s.levels;
  c->size_ = static_cast<int>(s.levels.size());
  c->width_ = 1;
  c->lo_ = s.lo;
  c->hi_ = s.hi;
  c->node_y_ = s.levels;
  c->node_w_.assign(s.levels.size(), 1.0);
  c->node_rows_.resize(s.levels.size());
  for (std::size_t j = 0; j < s.levels.size(); ++j) {
    c->node_rows_[j].first = static_cast<int>(j);
    c->node_rows_[j].values[0] = 1.0;
  }
  return c;
}

const SplineBasis& Carrier::basis() const {
  if (!spline_) throw Error(ErrorKind::unsupported, "discrete carrier has no spline basis");
  return *spline_;
}

int Carrier::span_of(double y) const {
  const auto it = std::upper_bound(breaks_.begin() + 1, breaks_.end() - 1, y);
  return static_cast<int>(it - breaks_.begin()) - 1;
}

int Carrier::level_index(double y) const {
  const auto it = std::lower_bound(levels_.begin(), levels_.end(), y - 1e-9);
  if (it == levels_.end() || std::abs(*it - y) > 1e-9) {
    std::ostringstream msg;
    msg << "response " << y << " is not a level of the discrete support";
    throw Error(ErrorKind::domain, msg.str());
  }
  return static_cast<int>(it - levels_.begin());
}

BasisRow Carrier::row(double y) const {
  if (spline_) return spline_->row(y);
  BasisRow r;
  r.first = level_index(y);
  r.values[0] = 1.0;
  return r;
}

Eigen::VectorXd Carrier::eval(double y) const {
  const BasisRow r = row(y);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(size_);
  for (int k = 0; k < width_; ++k) out[r.first + k] = r.values[static_cast<std::size_t>(k)];
  return out;
}

double Carrier::carrier(double y, const Eigen::VectorXd& gamma) const {
  const BasisRow r = row(y);
  double s = 0.0;
  for (int k = 0; k < width_; ++k) s += r.values[static_cast<std::size_t>(k)] * gamma[r.first + k];
  return s;
}

double Carrier::carrier_slope(double y, const Eigen::VectorXd& gamma) const {
  return basis().derivative(y, gamma);
}

std::vector<double> Carrier::carrier_at_nodes(const Eigen::VectorXd& gamma) const {
  if (gamma.size() != size_) throw Error(ErrorKind::config, "coefficient length does not match basis");
  std::vector<double> out(node_rows_.size());
  for (std::size_t j = 0; j < node_rows_.size(); ++j) {
    const BasisRow& r = node_rows_[j];
    double s = 0.0;
    for (int k = 0; k < width_; ++k) s += r.values[static_cast<std::size_t>(k)] * gamma[r.first + k];
    out[j] = s;
  }
  return out;
}

Eigen::VectorXd Carrier::expand(const Eigen::VectorXd& free) const {
  Eigen::VectorXd full(size_);
  full[anchor()] = 0.0;
  full.tail(size_ - 1) = free;
  return full;
}

Eigen::VectorXd Carrier::reduce(const Eigen::VectorXd& full) const { return full.tail(size_ - 1); }

TiltFamily::TiltFamily(std::shared_ptr<const Carrier> carrier, Eigen::VectorXd gamma)
    : carrier_(std::move(carrier)), gamma_(std::move(gamma)) {
  if (!gamma_.allFinite()) throw Error(ErrorKind::numeric, "non-finite carrier coefficients");
  c_nodes_ = carrier_->carrier_at_nodes(gamma_);
}

void TiltFamily::node_law(double eta, NodeLaw& out) const {
  if (!std::isfinite(eta)) throw Error(ErrorKind::numeric, "non-finite linear index");
  const auto& y = carrier_->node_y();
  const auto& w = carrier_->node_w();
  const std::size_t count = y.size();
  const double lo = carrier_->lo();
  out.eta = eta;
  out.p.resize(count);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < count; ++j) {
    const double s = (y[j] - lo) * eta + c_nodes_[j];
    out.p[j] = s;
    top = std::max(top, s);
  }
  double total = 0.0;
  for (std::size_t j = 0; j < count; ++j) {
    out.p[j] = w[j] * std::exp(out.p[j] - top);
    total += out.p[j];
  }
  const double inv = 1.0 / total;
  for (double& v : out.p) v *= inv;
  out.shift = top + std::log(total);
  out.log_norm = lo * eta + out.shift;
}

double TiltFamily::log_normalizer(double eta) const {
  NodeLaw law;
  node_law(eta, law);
  return law.log_norm;
}

ConditionalState TiltFamily::moments(double eta, bool with_var_b) const {
  NodeLaw law;
  node_law(eta, law);
  const Carrier& c = *carrier_;
  const auto& y = c.node_y();
  const int m = c.size();
  const int width = c.width();

  ConditionalState st;
  st.eta = eta;
  st.log_norm = law.log_norm;
  double mu = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) mu += law.p[j] * y[j];
  st.mean_b = Eigen::VectorXd::Zero(m);
  st.cov_yb = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd e_d2b = Eigen::VectorXd::Zero(m);
  if (with_var_b) st.var_b = Eigen::MatrixXd::Zero(m, m);

  double m2 = 0.0;
  double m3 = 0.0;
  std::array<double, 4> raw{};
  for (std::size_t j = 0; j < y.size(); ++j) {
    const double pj = law.p[j];
    const double yj = y[j];
    raw[0] += pj * yj;
    raw[1] += pj * yj * yj;
    raw[2] += pj * yj * yj * yj;
    raw[3] += pj * yj * yj * yj * yj;
    const double d = yj - mu;
    m2 += pj * d * d;
    m3 += pj * d * d * d;
    const BasisRow& r = c.node_row(static_cast<int>(j));
    for (int a = 0; a < width; ++a) {
      const double ba = pj * r.values[static_cast<std::size_t>(a)];
      st.mean_b[r.first + a] += ba;
      st.cov_yb[r.first + a] += ba * d;
      e_d2b[r.first + a] += ba * d * d;
      if (with_var_b) {
        for (int b = 0; b < width; ++b) {
          st.var_b(r.first + a, r.first + b) += ba * r.values[static_cast<std::size_t>(b)];
        }
      }
    }
  }
  st.raw = raw;
  st.var = std::max(m2, 0.0);
  st.third = m3;
  st.cov_y2b = e_d2b - st.var * st.mean_b;
  if (with_var_b) st.var_b -= st.mean_b * st.mean_b.transpose();
  return st;
}

double TiltFamily::density(double eta, double y) const {
  NodeLaw law;
  node_law(eta, law);
  return std::exp((y - carrier_->lo()) * eta + carrier_->carrier(y, gamma_) - law.shift);
}

TiltFamily::PartialRule TiltFamily::partial_rule(const NodeLaw& law, double a, double q) const {
  PartialRule out;
  if (!(q > a)) return out;
  const QuadratureGrid g = gauss_legendre(carrier_->nodes_per_span(), a, q);
  const double lo = carrier_->lo();
  const int width = carrier_->width();
  out.y = g.nodes;
  out.mass.resize(g.nodes.size());
  out.rows.resize(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const BasisRow r = carrier_->row(g.nodes[i]);
    double c = 0.0;
    for (int k = 0; k < width; ++k) c += r.values[static_cast<std::size_t>(k)] * gamma_[r.first + k];
    out.rows[i] = r;
    out.mass[i] = g.weights[i] * std::exp((g.nodes[i] - lo) * law.eta + c - law.shift);
  }
  return out;
}

double TiltFamily::partial_mass(const NodeLaw& law, double a, double q) const {
  if (!(q > a)) return 0.0;
  const QuadratureGrid g = gauss_legendre(carrier_->nodes_per_span(), a, q);
  const double lo = carrier_->lo();
  double s = 0.0;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    s += g.weights[i] *
         std::exp((g.nodes[i] - lo) * law.eta + carrier_->carrier(g.nodes[i], gamma_) - law.shift);
  }
  return s;
}

double TiltFamily::cdf(double eta, double y) const {
  NodeLaw law;
  node_law(eta, law);
  const Carrier& c = *carrier_;
  if (y < c.lo()) return 0.0;
  if (y >= c.hi()) return 1.0;
  if (c.discrete()) {
    double s = 0.0;
    for (std::size_t j = 0; j < c.levels().size() && c.levels()[j] <= y + 1e-9; ++j) s += law.p[j];
    return s;
  }
  const int span = c.span_of(y);
  double s = 0.0;
  for (int j = 0; j < c.span_begin(span); ++j) s += law.p[static_cast<std::size_t>(j)];
  return std::min(1.0, s + partial_mass(law, c.breaks()[static_cast<std::size_t>(span)], y));
}

QuantileLocal TiltFamily::quantile(double eta, double tau) const {
  const Carrier& c = *carrier_;
  if (c.discrete()) {
    throw Error(ErrorKind::unsupported, "quantile effects need a continuous response");
  }
  if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorKind::domain, "quantile level must lie in (0, 1)");

  NodeLaw law;
  node_law(eta, law);
  const double lo = c.lo();
  const int spans = c.span_count();
  const int per = c.nodes_per_span();
  const auto& breaks = c.breaks();

  // Locate the knot span holding the tau-quantile.
  double below = 0.0;
  int span = spans - 1;
  for (int k = 0; k < spans; ++k) {
    double mass = 0.0;
    for (int j = k * per; j < (k + 1) * per; ++j) mass += law.p[static_cast<std::size_t>(j)];
    if (below + mass > tau || k == spans - 1) {
      span = k;
      break;
    }
    below += mass;
  }

  const double a = breaks[static_cast<std::size_t>(span)];
  const double b = breaks[static_cast<std::size_t>(span + 1)];
  const double target = tau - below;
  auto dens = [&](double y) {
    return std::exp((y - lo) * eta + c.carrier(y, gamma_) - law.shift);
  };

  // Safeguarded Newton on the partial integral over [a, q].
  double left = a;
  double right = b;
  double q = a + (b - a) * std::clamp(target / std::max(1.0 - below, 1e-300), 0.0, 1.0);
  for (int iter = 0; iter < 200; ++iter) {
    const double g = partial_mass(law, a, q) - target;
    if (std::abs(g) <= 1e-14) break;
    if (g > 0.0) right = q; else left = q;
    const double fq = dens(q);
    double next = fq > 0.0 ? q - g / fq : 0.5 * (left + right);
    if (!(next > left && next < right)) next = 0.5 * (left + right);
    if (right - left <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(q))) {
      q = next;
      break;
    }
    q = next;
  }

  QuantileLocal out;
  out.tau = tau;
  out.q = q;
  out.density = dens(q);
  if (!(out.density > 1e-300) || !std::isfinite(out.density)) {
    throw Error(ErrorKind::ill_conditioned_quantile, "conditional density vanishes at the quantile");
  }
  out.carrier_slope = c.carrier_slope(q, gamma_);

  // E[(tau - 1{Y <= q}) g(Y)] = tau E[g] - integral of g f over [lo, q].
  const int m = c.size();
  const int width = c.width();
  double e1 = 0.0, e2 = 0.0;
  Eigen::VectorXd eb = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd e1b = Eigen::VectorXd::Zero(m);
  double p1 = 0.0, p2 = 0.0;
  Eigen::VectorXd pb = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd p1b = Eigen::VectorXd::Zero(m);

  const auto& ny = c.node_y();
  const int cut = c.span_begin(span);
  for (int j = 0; j < c.node_count(); ++j) {
    const double pj = law.p[static_cast<std::size_t>(j)];
    const double d = ny[static_cast<std::size_t>(j)] - q;
    const BasisRow& r = c.node_row(j);
    e1 += pj * d;
    e2 += pj * d * d;
    for (int k = 0; k < width; ++k) {
      const double v = pj * r.values[static_cast<std::size_t>(k)];
      eb[r.first + k] += v;
      e1b[r.first + k] += v * d;
    }
    if (j < cut) {
      p1 += pj * d;
      p2 += pj * d * d;
      for (int k = 0; k < width; ++k) {
        const double v = pj * r.values[static_cast<std::size_t>(k)];
        pb[r.first + k] += v;
        p1b[r.first + k] += v * d;
      }
    }
  }
  const PartialRule tail = partial_rule(law, a, q);
  for (std::size_t i = 0; i < tail.y.size(); ++i) {
    const double pm = tail.mass[i];
    const double d = tail.y[i] - q;
    const BasisRow& r = tail.rows[i];
    p1 += pm * d;
    p2 += pm * d * d;
    for (int k = 0; k < width; ++k) {
      const double v = pm * r.values[static_cast<std::size_t>(k)];
      pb[r.first + k] += v;
      p1b[r.first + k] += v * d;
    }
  }

  const double f = out.density;
  const double slope = eta + out.carrier_slope;  // d log f / dy at q
  out.qprime = (tau * e1 - p1) / f;
  out.qdprime = (tau * e2 - p2) / f - out.qprime * out.qprime * slope;
  out.dq_dgamma = (tau * eb - pb) / f;
  out.dqprime_dgamma =
      (tau * e1b - p1b) / f - out.qprime * c.eval(q) - out.dq_dgamma * (out.qprime * slope);
  return out;
}

namespace {

double linear_index(const Eigen::VectorXd& x, const Eigen::VectorXd& beta) {
  if (x.size() != beta.size()) throw Error(ErrorKind::config, "covariate length does not match beta");
  return x.dot(beta);
}

}  // namespace

double log_normalizer(const std::shared_ptr<const Carrier>& carrier, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& beta, const Eigen::VectorXd& gamma) {
  return TiltFamily(carrier, gamma).log_normalizer(linear_index(x, beta));
}

ConditionalState conditional_moments(const std::shared_ptr<const Carrier>& carrier,
                                     const Eigen::VectorXd& x, const Eigen::VectorXd& beta,
                                     const Eigen::VectorXd& gamma, bool with_var_b) {
  return TiltFamily(carrier, gamma).moments(linear_index(x, beta), with_var_b);
}

QuantileLocal conditional_quantile(const std::shared_ptr<const Carrier>& carrier,
                                   const Eigen::VectorXd& x, const Eigen::VectorXd& beta,
                                   const Eigen::VectorXd& gamma, double tau) {
  return TiltFamily(carrier, gamma).quantile(linear_index(x, beta), tau);
}

}  // namespace semfx
