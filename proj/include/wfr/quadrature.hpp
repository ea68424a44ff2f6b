#pragma once

#include <vector>

namespace wfr {

/// Gauss–Legendre rule on [-1, 1].
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

QuadratureRule gauss_legendre(int n);

/// Composite Gauss–Legendre rule: `panels` equal panels on [a, b], `order`
/// nodes per panel.
QuadratureRule composite_gauss_legendre(double a, double b, int panels, int order);

/// Gauss–Hermite rule for expectations under N(0, 1); weights sum to one.
QuadratureRule gauss_hermite_normal(int n);

}  // namespace wfr
