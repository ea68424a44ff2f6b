#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace wfr {

/// B-spline basis on a closed interval with a clamped (open-uniform style)
/// knot vector: each endpoint is repeated degree+1 times.
class SplineBasis {
 public:
  SplineBasis(double a, double b, std::vector<double> interior_knots, int degree = 3);

  /// `n_interior` equally spaced interior knots on (a, b).
  static SplineBasis uniform(double a, double b, int n_interior, int degree = 3);

  double lower() const { return a_; }
  double upper() const { return b_; }
  int degree() const { return degree_; }
  int dim() const { return static_cast<int>(knots_.size()) - degree_ - 1; }
  const std::vector<double>& interior_knots() const { return interior_; }
  /// Full clamped knot vector.
  const std::vector<double>& knots() const { return knots_; }
  bool contains(double s) const { return s >= a_ && s <= b_; }

  /// Dense vector (b_1(s), ..., b_q(s)). Throws DomainError outside [a, b].
  Eigen::VectorXd eval(double s) const;
  /// Dense vector of first derivatives.
  Eigen::VectorXd eval_deriv(double s) const;

  /// The degree+1 possibly nonzero values (and optionally derivatives) at s.
  /// Returns the index of the first of them. No domain check.
  int eval_local(double s, std::span<double> values, std::span<double> derivs = {}) const;

  /// Design matrix with rows eval(s_j).
  Eigen::MatrixXd design(std::span<const double> points) const;

  /// Value of the spline with coefficients `coef` at s.
  double eval_spline(const Eigen::VectorXd& coef, double s) const;

 private:
  int find_span(double s) const;

  double a_;
  double b_;
  int degree_;
  std::vector<double> interior_;
  std::vector<double> knots_;
};

/// Gram matrix J = int b(s) b(s)^T ds, exact for the piecewise polynomial
/// integrand (Gauss–Legendre with degree+2 nodes per knot interval).
Eigen::MatrixXd gram(const SplineBasis& basis);

/// Transform R (p x p) such that coef * R is J-orthonormal with each column's
/// largest-magnitude coefficient positive: R = (coef^T J coef)^{-1/2} S with
/// S a diagonal sign matrix. Throws DegeneracyError for rank-deficient coef.
Eigen::MatrixXd orthonormalizing_transform(const Eigen::MatrixXd& coef, const Eigen::MatrixXd& J);

/// coef * orthonormalizing_transform(coef, J).
Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& coef, const Eigen::MatrixXd& J);

/// Diagonal +-1 matrix making each column's largest-magnitude entry positive.
Eigen::VectorXd dominant_signs(const Eigen::MatrixXd& coef);

}  // namespace wfr
