#pragma once

#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "semfx/spline.hpp"

namespace semfx {

/// Response support: a compact interval with Lebesgue measure, or a finite
/// set of levels with counting measure.
struct Support {
  enum class Kind { continuous, discrete };

  Kind kind = Kind::continuous;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<double> levels;  // discrete only, strictly increasing
  int quad_nodes = 201;

  static Support continuous(double lo, double hi, int quad_nodes = 201);
  static Support discrete(std::vector<double> levels);
  /// Levels {0, 1, ..., m_levels}.
  static Support discrete_upto(int m_levels);

  bool is_discrete() const { return kind == Kind::discrete; }
};

/// Basis for the carrier c(y) ~ B(y)^T gamma together with the rule used to
/// integrate over the support. For continuous responses the basis is a
/// clamped B-spline and the rule is Gauss-Legendre on each knot span; for
/// discrete responses B(y) is the vector of level indicators and the rule is
/// the plain sum over levels. Coefficient `anchor()` is pinned to zero.
class Carrier {
 public:
  static std::shared_ptr<const Carrier> spline(SplineBasis basis, int quad_nodes = 201);
  static std::shared_ptr<const Carrier> indicator(std::vector<double> levels);

  bool discrete() const { return !spline_.has_value(); }
  int size() const { return size_; }
  int free_size() const { return size_ - 1; }
  int anchor() const { return 0; }
  int width() const { return width_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }

  const SplineBasis& basis() const;
  const std::vector<double>& levels() const { return levels_; }

  int node_count() const { return static_cast<int>(node_y_.size()); }
  const std::vector<double>& node_y() const { return node_y_; }
  const std::vector<double>& node_w() const { return node_w_; }
  const BasisRow& node_row(int j) const { return node_rows_[static_cast<std::size_t>(j)]; }

  /// Continuous only: breakpoints of the knot spans and the node ranges inside them.
  const std::vector<double>& breaks() const { return breaks_; }
  int span_count() const { return static_cast<int>(breaks_.size()) - 1; }
  int span_begin(int k) const { return k * nodes_per_span_; }
  int nodes_per_span() const { return nodes_per_span_; }
  int span_of(double y) const;

  /// Sparse basis at y; for discrete carriers y must equal one of the levels.
  BasisRow row(double y) const;
  Eigen::VectorXd eval(double y) const;
  int level_index(double y) const;

  double carrier(double y, const Eigen::VectorXd& gamma) const;
  /// c'(y) = B'(y)^T gamma; continuous only.
  double carrier_slope(double y, const Eigen::VectorXd& gamma) const;
  std::vector<double> carrier_at_nodes(const Eigen::VectorXd& gamma) const;

  /// Full coefficient vector from the free coordinates (anchor inserted as 0).
  Eigen::VectorXd expand(const Eigen::VectorXd& free) const;
  Eigen::VectorXd reduce(const Eigen::VectorXd& full) const;

 private:
  Carrier() = default;

  std::optional<SplineBasis> spline_;
  std::vector<double> levels_;
  int size_ = 0;
  int width_ = 1;
  double lo_ = 0.0;
  double hi_ = 1.0;
  std::vector<double> breaks_;
  int nodes_per_span_ = 0;
  std::vector<double> node_y_;
  std::vector<double> node_w_;
  std::vector<BasisRow> node_rows_;
};

/// Normalized node probabilities of f*(.|eta) and its log normalizer.
struct NodeLaw {
  double eta = 0.0;
  std::vector<double> p;
  double log_norm = 0.0;  // log of the integral of exp{y eta + c(y)}
  double shift = 0.0;     // internal: exponent offset so that f(y) = exp((y-lo) eta + c(y) - shift)
};

struct ConditionalState {
  double eta = 0.0;
  double log_norm = 0.0;
  std::array<double, 4> raw{};  // E*(Y^k), k = 1..4
  double var = 0.0;             // var*(Y)
  double third = 0.0;           // E*{(Y - mu)^3}
  Eigen::VectorXd mean_b;       // E*{B(Y)}
  Eigen::VectorXd cov_yb;       // cov*{Y, B(Y)}
  Eigen::VectorXd cov_y2b;      // E*[{Y - mu}^2 {B(Y) - E*B}]
  Eigen::MatrixXd var_b;        // var*{B(Y)}; empty unless requested
};

/// Local quantile quantities at nu = eta for level tau.
struct QuantileLocal {
  double tau = 0.5;
  double q = 0.0;
  double density = 0.0;        // f*(q)
  double carrier_slope = 0.0;  // c'(q)
  double qprime = 0.0;         // dq/dnu
  double qdprime = 0.0;        // d2q/dnu2
  Eigen::VectorXd dq_dgamma;       // full m
  Eigen::VectorXd dqprime_dgamma;  // full m
};

/// The exponential-tilt family f*(y|eta) = exp{y eta + B(y)^T gamma} / norm for a
/// fixed gamma. All queries are const and thread-safe.
class TiltFamily {
 public:
  TiltFamily(std::shared_ptr<const Carrier> carrier, Eigen::VectorXd gamma);

  const Carrier& carrier() const { return *carrier_; }
  const std::shared_ptr<const Carrier>& carrier_ptr() const { return carrier_; }
  const Eigen::VectorXd& gamma() const { return gamma_; }
  const std::vector<double>& carrier_nodes() const { return c_nodes_; }

  void node_law(double eta, NodeLaw& out) const;
  double log_normalizer(double eta) const;
  ConditionalState moments(double eta, bool with_var_b = false) const;
  /// Density (continuous) or mass (discrete) at y.
  double density(double eta, double y) const;
  double cdf(double eta, double y) const;
  QuantileLocal quantile(double eta, double tau) const;

 private:
  struct PartialRule {
    std::vector<double> y;
    std::vector<double> mass;  // weight * f(y)
    std::vector<BasisRow> rows;
  };
  // Gauss-Legendre rule on [a, q] (inside one knot span) weighted by f.
  PartialRule partial_rule(const NodeLaw& law, double a, double q) const;
  double partial_mass(const NodeLaw& law, double a, double q) const;

  std::shared_ptr<const Carrier> carrier_;
  Eigen::VectorXd gamma_;
  std::vector<double> c_nodes_;
};

double log_normalizer(const std::shared_ptr<const Carrier>& carrier, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& beta, const Eigen::VectorXd& gamma);
ConditionalState conditional_moments(const std::shared_ptr<const Carrier>& carrier,
                                     const Eigen::VectorXd& x, const Eigen::VectorXd& beta,
                                     const Eigen::VectorXd& gamma, bool with_var_b = false);
QuantileLocal conditional_quantile(const std::shared_ptr<const Carrier>& carrier,
                                   const Eigen::VectorXd& x, const Eigen::VectorXd& beta,
                                   const Eigen::VectorXd& gamma, double tau);

}  // namespace semfx
