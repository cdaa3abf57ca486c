#include "semfx/spline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "semfx/error.hpp"

namespace semfx {

KnotVector::KnotVector(double lo, double hi, int order, std::vector<double> interior)
    : lo_(lo), hi_(hi), order_(order), interior_(std::move(interior)) {
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw Error(ErrorKind::domain, "knot vector needs finite lo < hi");
  }
  if (order < 1 || order > kMaxSplineOrder) {
    throw Error(ErrorKind::unsupported, "spline order must lie in [1, " +
                                            std::to_string(kMaxSplineOrder) + "]");
  }
  double prev = lo;
  for (double t : interior_) {
    if (!(t > prev) || !(t < hi)) {
      throw Error(ErrorKind::domain, "interior knots must be strictly increasing inside (lo, hi)");
    }
    prev = t;
  }
  full_.reserve(interior_.size() + 2 * static_cast<std::size_t>(order));
  full_.insert(full_.end(), static_cast<std::size_t>(order), lo);
  full_.insert(full_.end(), interior_.begin(), interior_.end());
  full_.insert(full_.end(), static_cast<std::size_t>(order), hi);
}

std::vector<double> KnotVector::breakpoints() const {
  std::vector<double> out;
  out.reserve(interior_.size() + 2);
  out.push_back(lo_);
  out.insert(out.end(), interior_.begin(), interior_.end());
  out.push_back(hi_);
  return out;
}

int default_interior_knots(long n) {
  return static_cast<int>(std::ceil(0.7 * std::pow(static_cast<double>(n), 0.2)));
}

namespace {

double type7_quantile(const std::vector<double>& sorted, double level) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * level;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

KnotVector build_knots(std::span<const double> y, int order, double lo, double hi,
                       int interior_count) {
  if (y.size() < 2) throw Error(ErrorKind::degenerate_input, "knot placement needs n >= 2");
  if (!(lo < hi)) throw Error(ErrorKind::domain, "knot placement needs lo < hi");

  std::vector<double> sorted(y.begin(), y.end());
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() < lo || sorted.back() > hi || !std::isfinite(sorted.front()) ||
      !std::isfinite(sorted.back())) {
    throw Error(ErrorKind::domain, "responses must lie inside the support [lo, hi]");
  }

  const int count = interior_count >= 0 ? interior_count
                                        : default_interior_knots(static_cast<long>(y.size()));
  std::vector<double> uniq = sorted;
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (static_cast<int>(uniq.size()) < count + 1) {
    std::ostringstream msg;
    msg << "degenerate knots: " << uniq.size() << " distinct responses cannot support " << count
        << " interior knots";
    throw Error(ErrorKind::degenerate_input, msg.str());
  }

  std::vector<double> interior(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    interior[static_cast<std::size_t>(k)] =
        type7_quantile(sorted, static_cast<double>(k + 1) / static_cast<double>(count + 1));
  }

  const double eps = 1e-9 * (hi - lo);
  double prev = lo;
  for (double& t : interior) {
    t = std::max(t, prev + eps);
    prev = t;
  }
  double next = hi;
  for (auto it = interior.rbegin(); it != interior.rend(); ++it) {
    *it = std::min(*it, next - eps);
    next = *it;
  }
  return KnotVector(lo, hi, order, std::move(interior));
}

SplineBasis::SplineBasis(KnotVector knots, int anchor) : knots_(std::move(knots)), anchor_(anchor) {
  if (anchor_ < 0 || anchor_ >= knots_.basis_count()) {
    throw Error(ErrorKind::config, "anchor index outside the basis");
  }
}

void SplineBasis::check_domain(double t) const {
  if (!(t >= lo() && t <= hi())) {
    std::ostringstream msg;
    msg << "point " << t << " outside spline support [" << lo() << ", " << hi() << "]";
    throw Error(ErrorKind::domain, msg.str());
  }
}

int SplineBasis::find_span(double t) const {
  const auto& t_full = knots_.full();
  const int r = order();
  const int m = size();
  // Spans with positive length live in [r-1, m-1].
  auto first = t_full.begin() + r;
  auto last = t_full.begin() + m;
  const auto it = std::upper_bound(first, last, t);
  return static_cast<int>(it - t_full.begin()) - 1;
}

void SplineBasis::triangle(int mu, double t, int deg, double* out) const {
  const auto& k = knots_.full();
  std::array<double, kMaxSplineOrder> left{};
  std::array<double, kMaxSplineOrder> right{};
  out[0] = 1.0;
  for (int j = 1; j <= deg; ++j) {
    left[static_cast<std::size_t>(j)] = t - k[static_cast<std::size_t>(mu + 1 - j)];
    right[static_cast<std::size_t>(j)] = k[static_cast<std::size_t>(mu + j)] - t;
    double saved = 0.0;
    for (int s = 0; s < j; ++s) {
      const double temp = out[s] / (right[static_cast<std::size_t>(s + 1)] +
                                    left[static_cast<std::size_t>(j - s)]);
      out[s] = saved + right[static_cast<std::size_t>(s + 1)] * temp;
      saved = left[static_cast<std::size_t>(j - s)] * temp;
    }
    out[j] = saved;
  }
}

BasisRow SplineBasis::row(double t) const {
  check_domain(t);
  BasisRow out;
  const int mu = find_span(t);
  const int deg = order() - 1;
  out.first = mu - deg;
  triangle(mu, t, deg, out.values.data());
  return out;
}

BasisRow SplineBasis::deriv_row(double t) const {
  check_domain(t);
  const int r = order();
  if (r < 2) throw Error(ErrorKind::unsupported, "basis derivative needs spline order >= 2");
  const int deg = r - 1;
  const int mu = find_span(t);
  std::array<double, kMaxSplineOrder> lower{};
  triangle(mu, t, deg - 1, lower.data());

  const auto& k = knots_.full();
  BasisRow out;
  out.first = mu - deg;
  for (int j = 0; j <= deg; ++j) {
    const int i = out.first + j;
    double d = 0.0;
    if (j >= 1) {
      d += lower[static_cast<std::size_t>(j - 1)] /
           (k[static_cast<std::size_t>(i + deg)] - k[static_cast<std::size_t>(i)]);
    }
    if (j <= deg - 1) {
      d -= lower[static_cast<std::size_t>(j)] /
           (k[static_cast<std::size_t>(i + deg + 1)] - k[static_cast<std::size_t>(i + 1)]);
    }
    out.values[static_cast<std::size_t>(j)] = deg * d;
  }
  return out;
}

Eigen::VectorXd SplineBasis::eval(double t) const {
  const BasisRow b = row(t);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(size());
  for (int j = 0; j < order(); ++j) out[b.first + j] = b.values[static_cast<std::size_t>(j)];
  return out;
}

Eigen::VectorXd SplineBasis::eval_deriv(double t) const {
  const BasisRow b = deriv_row(t);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(size());
  for (int j = 0; j < order(); ++j) out[b.first + j] = b.values[static_cast<std::size_t>(j)];
  return out;
}

double SplineBasis::value(double t, const Eigen::VectorXd& coef) const {
  const BasisRow b = row(t);
  double s = 0.0;
  for (int j = 0; j < order(); ++j) s += b.values[static_cast<std::size_t>(j)] * coef[b.first + j];
  return s;
}

double SplineBasis::derivative(double t, const Eigen::VectorXd& coef) const {
  const BasisRow b = deriv_row(t);
  double s = 0.0;
  for (int j = 0; j < order(); ++j) s += b.values[static_cast<std::size_t>(j)] * coef[b.first + j];
  return s;
}

}  // namespace semfx
