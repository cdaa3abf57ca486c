#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace semfx {

inline constexpr int kMaxSplineOrder = 8;

/// Clamped knot sequence on [lo, hi]: the boundary knots are repeated
/// `order` times, interior knots are strictly increasing inside (lo, hi).
class KnotVector {
 public:
  KnotVector(double lo, double hi, int order, std::vector<double> interior);

  double lo() const { return lo_; }
  double hi() const { return hi_; }
  int order() const { return order_; }
  const std::vector<double>& interior() const { return interior_; }

  /// Number of basis functions, N + r.
  int basis_count() const { return static_cast<int>(interior_.size()) + order_; }

  /// Full clamped sequence t_0..t_{m+r-1}.
  const std::vector<double>& full() const { return full_; }

  /// Distinct breakpoints lo < t_1 < ... < t_N < hi.
  std::vector<double> breakpoints() const;

 private:
  double lo_;
  double hi_;
  int order_;
  std::vector<double> interior_;
  std::vector<double> full_;
};

/// Number of interior knots for a sample of size n: ceil(0.7 n^{1/5}).
int default_interior_knots(long n);

/// Interior knots at the type-7 empirical quantiles of `y` at levels
/// k/(N+1), k = 1..N, with N from default_interior_knots unless given.
/// Ties and boundary collisions are nudged inward by 1e-9 (hi - lo).
KnotVector build_knots(std::span<const double> y, int order, double lo, double hi,
                       int interior_count = -1);

/// Nonzero block of the basis at one point: values of B_first..B_{first+order-1}.
struct BasisRow {
  int first = 0;
  std::array<double, kMaxSplineOrder> values{};
};

class SplineBasis {
 public:
  explicit SplineBasis(KnotVector knots, int anchor = 0);

  const KnotVector& knots() const { return knots_; }
  int size() const { return knots_.basis_count(); }
  int order() const { return knots_.order(); }
  int anchor() const { return anchor_; }
  double lo() const { return knots_.lo(); }
  double hi() const { return knots_.hi(); }

  /// Index of the knot span [t_mu, t_{mu+1}) holding t; t = hi maps to the last span.
  int find_span(double t) const;

  BasisRow row(double t) const;
  BasisRow deriv_row(double t) const;

  /// Dense B(t); throws ErrorKind::domain outside [lo, hi].
  Eigen::VectorXd eval(double t) const;
  /// Dense B'(t); requires order >= 2.
  Eigen::VectorXd eval_deriv(double t) const;

  double value(double t, const Eigen::VectorXd& coef) const;
  double derivative(double t, const Eigen::VectorXd& coef) const;

 private:
  void check_domain(double t) const;
  // Cox-de Boor triangle for the `deg+1` nonzero functions of degree `deg` at span mu.
  void triangle(int mu, double t, int deg, double* out) const;

  KnotVector knots_;
  int anchor_;
};

}  // namespace semfx
