#pragma once

#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace wfr {

/// Knot vector of a monotone Hermite warping family on [a, b]:
/// a < tau0_1 < ... < tau0_r < b. r = 0 means "no warping".
class WarpSpec {
 public:
  WarpSpec(double a, double b, std::vector<double> knots);

  double lower() const { return a_; }
  double upper() const { return b_; }
  int r() const { return static_cast<int>(knots_.size()); }
  const std::vector<double>& knots() const { return knots_; }
  /// (a, tau0_1, ..., tau0_r, b).
  const std::vector<double>& extended_knots() const { return extended_; }
  /// Jupp coordinates of the reference knots (the identity warp).
  Eigen::VectorXd reference_theta() const;

 private:
  double a_;
  double b_;
  std::vector<double> knots_;
  std::vector<double> extended_;
};

struct HermiteShape {
  double h00;
  double h10;
};

/// h00(s) = (1 + 2s)(1 - s)^2, h10(s) = s(1 - s)^2.
HermiteShape hermite_h(double s);

/// (alpha_j(s), beta_j(s)) for j in 0..r+1.
std::pair<double, double> hermite_basis(const WarpSpec& spec, int j, double s);

/// Slopes at (a, tau0, b) for the interpolant through (a, tau, b), with
/// their Jacobian with respect to tau ((r+2) x r).
struct SlopesWithJacobian {
  Eigen::VectorXd slopes;
  Eigen::MatrixXd jacobian;
};

/// Fritsch–Carlson monotone slopes: three-point initial slopes (one-sided
/// secants at the ends), then each interval's pair projected onto the disc
/// of radius 3 in secant-relative units. Throws DomainError unless
/// (a, tau, b) is strictly increasing.
Eigen::VectorXd fc_slopes(const WarpSpec& spec, const Eigen::VectorXd& tau);
SlopesWithJacobian fc_slopes_with_jacobian(const WarpSpec& spec, const Eigen::VectorXd& tau);

/// theta_j = log((tau_{j+1} - tau_j) / (tau_j - tau_{j-1})), tau_0 = a, tau_{r+1} = b.
Eigen::VectorXd jupp(const WarpSpec& spec, const Eigen::VectorXd& tau);
/// Exact inverse of jupp; strictly increasing output in (a, b) for finite theta.
Eigen::VectorXd jupp_inv(const WarpSpec& spec, const Eigen::VectorXd& theta);
/// d tau / d theta (r x r).
Eigen::MatrixXd jupp_inv_jacobian(const WarpSpec& spec, const Eigen::VectorXd& theta);

/// One member of the family: omega(tau0_j) = tau_j with monotone slopes.
class Warp {
 public:
  static Warp identity(const WarpSpec& spec);
  static Warp from_values(const WarpSpec& spec, const Eigen::VectorXd& tau);
  static Warp from_jupp(const WarpSpec& spec, const Eigen::VectorXd& theta);
  /// Explicit slopes, no monotonicity repair.
  Warp(const WarpSpec& spec, Eigen::VectorXd tau, Eigen::VectorXd slopes);

  const WarpSpec& spec() const { return spec_; }
  const Eigen::VectorXd& values() const { return tau_; }
  const Eigen::VectorXd& slopes() const { return slopes_; }

  /// omega(s); DomainError outside [a, b].
  double eval(double s) const;
  double derivative(double s) const;
  /// s with omega(s) = t, to about 1e-14 (b - a).
  double invert(double t) const;

  /// d omega(s) / d(extended value k) and d(slope k), k = 0..r+1, at s.
  void partials(double s, Eigen::Ref<Eigen::VectorXd> d_values, Eigen::Ref<Eigen::VectorXd> d_slopes) const;

 private:
  int interval_of(double s) const;
  double value_at(int k) const;

  WarpSpec spec_;
  Eigen::VectorXd tau_;
  Eigen::VectorXd slopes_;
};

/// Inverse-warped grid s*_j = omega^{-1}(s_j) for the warp with Jupp
/// coordinates theta, and optionally d s*_j / d theta (nu x r).
struct WarpedGrid {
  Eigen::VectorXd points;
  Eigen::MatrixXd jacobian;
};

WarpedGrid inverse_warp_grid(const WarpSpec& spec, const Eigen::VectorXd& theta,
                             std::span<const double> grid, bool with_jacobian);

}  // namespace wfr
