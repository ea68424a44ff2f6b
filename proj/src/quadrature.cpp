#include "wfr/quadrature.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "wfr/errors.hpp"

namespace wfr {

QuadratureRule gauss_legendre(int n) {
  if (n < 1) throw DomainError("gauss_legendre: need at least one node");
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  // Newton on P_n from the Chebyshev-like initial guess; symmetric pairs.
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      if (n == 1) {
        p1 = x;
        p0 = 1.0;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // Final derivative at converged node.
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = pk;
    }
    if (n == 1) {
      rule.nodes[0] = 0.0;
      rule.weights[0] = 2.0;
      return rule;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

QuadratureRule composite_gauss_legendre(double a, double b, int panels, int order) {
  if (!(b > a) || panels < 1) throw DomainError("composite_gauss_legendre: bad interval");
  const QuadratureRule base = gauss_legendre(order);
  QuadratureRule rule;
  const double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    const double lo = a + p * h;
    for (int k = 0; k < order; ++k) {
      rule.nodes.push_back(lo + 0.5 * h * (base.nodes[k] + 1.0));
      rule.weights.push_back(0.5 * h * base.weights[k]);
    }
  }
  return rule;
}

QuadratureRule gauss_hermite_normal(int n) {
  if (n < 1) throw DomainError("gauss_hermite_normal: need at least one node");
  // Golub-Welsch on the probabilists' Hermite recurrence
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) jac(i, i - 1) = jac(i - 1, i) = std::sqrt(static_cast<double>(i));
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
  QuadratureRule rule;
  for (int i = 0; i < n; ++i) {
    rule.nodes.push_back(es.eigenvalues()(i));
    rule.weights.push_back(es.eigenvectors()(0, i) * es.eigenvectors()(0, i));
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

}  // namespace wfr
