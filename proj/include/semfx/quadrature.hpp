#pragma once

#include <span>
#include <vector>

namespace semfx {

struct QuadratureGrid {
  std::vector<double> nodes;    // strictly increasing
  std::vector<double> weights;  // positive, summing to the interval length
};

/// n-point Gauss-Legendre rule on [a, b].
QuadratureGrid gauss_legendre(int n, double a, double b);

/// Gauss-Legendre rule applied piecewise between consecutive breakpoints,
/// with about total_nodes nodes split evenly over the pieces (at least
/// min_per_piece each).
QuadratureGrid composite_gauss_legendre(std::span<const double> breaks, int total_nodes,
                                        int min_per_piece = 8);

}  // namespace semfx
