#include "semfx/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "semfx/error.hpp"

namespace semfx {

namespace {

struct Reference {
  std::vector<double> x;
  std::vector<double> w;
};

// Newton iteration on P_n from the Chebyshev-like initial guesses.
Reference compute_reference(int n) {
  Reference ref;
  ref.x.resize(static_cast<std::size_t>(n));
  ref.w.resize(static_cast<std::size_t>(n));
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = 0.0;
      for (int k = 1; k <= n; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    // Recompute derivative at the converged root for the weight.
    double p0 = 1.0;
    double p1 = 0.0;
    for (int k = 1; k <= n; ++k) {
      const double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
    }
    dp = n * (z * p0 - p1) / (z * z - 1.0);
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    ref.x[static_cast<std::size_t>(i)] = -z;
    ref.x[static_cast<std::size_t>(n - 1 - i)] = z;
    ref.w[static_cast<std::size_t>(i)] = w;
    ref.w[static_cast<std::size_t>(n - 1 - i)] = w;
  }
  if (n % 2 == 1) ref.x[static_cast<std::size_t>(n / 2)] = 0.0;
  return ref;
}

const Reference& reference(int n) {
  static std::mutex mu;
  static std::map<int, Reference> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, compute_reference(n)).first;
  return it->second;
}

}  // namespace

QuadratureGrid gauss_legendre(int n, double a, double b) {
  if (n < 1) throw Error(ErrorKind::config, "quadrature needs at least one node");
  if (!(a < b)) throw Error(ErrorKind::domain, "quadrature interval must satisfy a < b");
  const Reference& ref = reference(n);
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  QuadratureGrid g;
  g.nodes.resize(static_cast<std::size_t>(n));
  g.weights.resize(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
    g.nodes[i] = mid + half * ref.x[i];
    g.weights[i] = half * ref.w[i];
  }
  return g;
}

QuadratureGrid composite_gauss_legendre(std::span<const double> breaks, int total_nodes,
                                        int min_per_piece) {
  if (breaks.size() < 2) throw Error(ErrorKind::config, "composite rule needs two breakpoints");
  const auto pieces = static_cast<int>(breaks.size()) - 1;
  const int per = std::max(min_per_piece, (total_nodes + pieces - 1) / pieces);
  QuadratureGrid out;
  for (int k = 0; k < pieces; ++k) {
    const QuadratureGrid g = gauss_legendre(per, breaks[static_cast<std::size_t>(k)],
                                            breaks[static_cast<std::size_t>(k + 1)]);
    out.nodes.insert(out.nodes.end(), g.nodes.begin(), g.nodes.end());
    out.weights.insert(out.weights.end(), g.weights.begin(), g.weights.end());
  }
  return out;
}

}  // namespace semfx
