#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "semfx/fit.hpp"

namespace testdata {

inline double trunc_normal_draw(double mean, double lo, double hi, double u) {
  const boost::math::normal law(mean, 1.0);
  double v;
  if (mean < lo) {
    const double sa = boost::math::cdf(boost::math::complement(law, lo));
    const double sb = boost::math::cdf(boost::math::complement(law, hi));
    v = boost::math::quantile(boost::math::complement(law, sa - u * (sa - sb)));
  } else {
    const double fa = boost::math::cdf(law, lo);
    const double fb = boost::math::cdf(law, hi);
    v = boost::math::quantile(law, fa + u * (fb - fa));
  }
  return std::clamp(v, lo, hi);
}

// Y | x ~ N(x^T b, 1) truncated to [-5, 5] with standard normal covariates.
inline semfx::Dataset trunc_normal(long n, const Eigen::VectorXd& b, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd x(n, b.size());
  Eigen::VectorXd y(n);
  for (long i = 0; i < n; ++i) {
    for (int j = 0; j < b.size(); ++j) x(i, j) = z(rng);
    y[i] = trunc_normal_draw(x.row(i).dot(b), -5.0, 5.0, u(rng));
  }
  return semfx::Dataset::make(x, y, semfx::Support::continuous(-5.0, 5.0));
}

// Y | x ~ N(x^T b, 1) on a padded data range.
inline semfx::Dataset plain_normal(long n, const Eigen::VectorXd& b, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  Eigen::MatrixXd x(n, b.size());
  Eigen::VectorXd y(n);
  for (long i = 0; i < n; ++i) {
    for (int j = 0; j < b.size(); ++j) x(i, j) = z(rng);
    y[i] = x.row(i).dot(b) + z(rng);
  }
  return semfx::Dataset::make(x, y, semfx::padded_support(y));
}

inline semfx::Dataset bernoulli(long n, std::uint64_t seed, double offset = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u;
  Eigen::MatrixXd x(n, 3);
  Eigen::VectorXd y(n);
  const Eigen::Vector3d b(-0.5, 0.5, 1.0);
  for (long i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = z(rng);
    const double pr = 1.0 / (1.0 + std::exp(-x.row(i).dot(b) - offset));
    y[i] = u(rng) < pr ? 1.0 : 0.0;
  }
  return semfx::Dataset::make(x, y, semfx::Support::discrete_upto(1));
}

// Poisson counts with uniform covariates, support {0..max(y)}.
inline semfx::Dataset poisson(long n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.5, 1.0);
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd y(n);
  for (long i = 0; i < n; ++i) {
    x(i, 0) = u(rng);
    x(i, 1) = u(rng);
    std::poisson_distribution<int> pd(std::exp(1.0 + 0.5 * x(i, 0) - x(i, 1)));
    y[i] = pd(rng);
  }
  return semfx::Dataset::make(x, y, semfx::Support::discrete_upto(static_cast<int>(y.maxCoeff())));
}

// Labour-market shaped data: participation, age (decades), age^2, education,
// young and old children, foreign. Income rises then falls with age.
struct SwissLike {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::string> names{"participation", "age", "age2", "education",
                                 "youngkids",     "oldkids", "foreign"};
};

inline SwissLike swiss_like(long n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z;
  std::gamma_distribution<double> g(4.0, 0.25);
  SwissLike d;
  d.x.resize(n, 7);
  d.y.resize(n);
  for (long i = 0; i < n; ++i) {
    const double part = u(rng) < 0.46 ? 1.0 : 0.0;
    const double age = 2.0 + 4.2 * u(rng);
    const double edu = std::round(std::clamp(9.0 + 3.0 * z(rng), 1.0, 21.0));
    const double young = std::floor(u(rng) * u(rng) * 3.0);
    const double old = std::floor(u(rng) * 4.0 * u(rng));
    const double foreign = u(rng) < 0.25 ? 1.0 : 0.0;
    d.x.row(i) << part, age, age * age, edu, young, old, foreign;
    const double mean = 9.0 - 0.2 * part + 0.8 * age - 0.09 * age * age + 0.05 * edu +
                        0.02 * young + 0.02 * old - 0.1 * foreign;
    d.y[i] = mean + 0.8 * (g(rng) - 1.0) + 0.3 * z(rng);
  }
  return d;
}

inline Eigen::VectorXd random_vector(int k, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Eigen::VectorXd v(k);
  for (int i = 0; i < k; ++i) v[i] = u(rng);
  return v;
}

}  // namespace testdata
