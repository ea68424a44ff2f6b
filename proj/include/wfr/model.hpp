#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wfr/basis.hpp"
#include "wfr/warp.hpp"

namespace wfr {

enum class Side { x, y };

/// Fixed meta-parameters: spline bases, warp knot families, component counts.
/// Gram matrices and reference Jupp coordinates are precomputed.
class ModelConfig {
 public:
  ModelConfig(SplineBasis x_basis, SplineBasis y_basis, WarpSpec x_warp, WarpSpec y_warp, int p1, int p2);

  const SplineBasis& basis(Side side) const { return side == Side::x ? x_basis_ : y_basis_; }
  const WarpSpec& warp(Side side) const { return side == Side::x ? x_warp_ : y_warp_; }
  const Eigen::MatrixXd& gram(Side side) const { return side == Side::x ? gram_x_ : gram_y_; }
  const Eigen::VectorXd& theta0(Side side) const { return side == Side::x ? theta_x0_ : theta_y0_; }
  int p(Side side) const { return side == Side::x ? p1_ : p2_; }
  int r(Side side) const { return warp(side).r(); }
  int q(Side side) const { return basis(side).dim(); }

  int p1() const { return p1_; }
  int p2() const { return p2_; }
  int r1() const { return x_warp_.r(); }
  int r2() const { return y_warp_.r(); }
  int d1() const { return p1_ + r1(); }
  int d2() const { return p2_ + r2(); }

  /// (0, theta_x0) and (0, theta_y0).
  Eigen::VectorXd mu_w() const;
  Eigen::VectorXd mu_z() const;

 private:
  SplineBasis x_basis_, y_basis_;
  WarpSpec x_warp_, y_warp_;
  int p1_, p2_;
  Eigen::MatrixXd gram_x_, gram_y_;
  Eigen::VectorXd theta_x0_, theta_y0_;
};

/// All estimable parameters. Sigma_e is diagonal and stored as its diagonal.
struct ModelParams {
  Eigen::MatrixXd A;        // d2 x d1
  Eigen::VectorXd sigma_e;  // diag(Sigma_e), d2
  Eigen::MatrixXd sigma_w;  // d1 x d1
  Eigen::VectorXd m_x;      // q1
  Eigen::VectorXd m_y;      // q2
  Eigen::MatrixXd C;        // q1 x p1
  Eigen::MatrixXd D;        // q2 x p2
  double sigma2_eps = 1.0;
  double sigma2_eta = 1.0;

  const Eigen::VectorXd& mean_coef(Side side) const { return side == Side::x ? m_x : m_y; }
  const Eigen::MatrixXd& components(Side side) const { return side == Side::x ? C : D; }
  double noise_var(Side side) const { return side == Side::x ? sigma2_eps : sigma2_eta; }

  /// Sigma_z = A Sigma_w A^T + Sigma_e.
  Eigen::MatrixXd sigma_z() const;
  /// Gamma = A_1. Sigma_w A_1.^T + Sigma_e,11 (p2 x p2).
  Eigen::MatrixXd gamma(int p2) const;
};

/// Zero-initialized parameters with the shapes implied by config.
ModelParams zero_params(const ModelConfig& config);
/// Throws DomainError if shapes disagree with config.
void check_shapes(const ModelConfig& config, const ModelParams& params);

/// One paired observation: x on grid s, y on grid t.
struct Curve {
  std::string id;
  Eigen::VectorXd s, x;
  Eigen::VectorXd t, y;
};

using CurveDataset = std::vector<Curve>;

/// Grids inside the basis domains, matching lengths, finite values, at least
/// one point per side (when require_y).
void check_dataset(const ModelConfig& config, const CurveDataset& data, bool require_y = true);

double eval_mean(const ModelConfig& config, const ModelParams& params, Side side, double point);
Eigen::VectorXd eval_components(const ModelConfig& config, const ModelParams& params, Side side, double point);

/// mu(omega^{-1}(s)) + sum_k score_k comp_k(omega^{-1}(s)), omega = warp with Jupp coordinates theta.
Eigen::VectorXd reconstruct_curve(const ModelConfig& config, const ModelParams& params, Side side,
                                  const Eigen::VectorXd& scores, const Eigen::VectorXd& theta,
                                  const Eigen::VectorXd& grid);

/// beta(s,t) = psi(t)^T A11 phi(s), gamma1(t) = A12^T psi(t), gamma2(s) = A21 phi(s).
class RegressionKernels {
 public:
  RegressionKernels(const ModelConfig& config, const ModelParams& params);

  double beta(double s, double t) const;
  Eigen::VectorXd gamma1(double t) const;
  Eigen::VectorXd gamma2(double s) const;
  /// beta on the product grid: rows index t, columns index s.
  Eigen::MatrixXd beta_grid(const Eigen::VectorXd& s, const Eigen::VectorXd& t) const;

  const Eigen::MatrixXd& a11() const { return a11_; }

 private:
  SplineBasis x_basis_, y_basis_;
  Eigen::MatrixXd C_, D_;
  Eigen::MatrixXd a11_, a12_, a21_;
};

RegressionKernels kernels(const ModelConfig& config, const ModelParams& params);

/// Result of constraint enforcement. The latent coordinates change by
/// w - mu_w -> w_transform (w - mu_w) and z - mu_z -> z_transform (z - mu_z).
struct ConstrainedParams {
  ModelParams params;
  Eigen::MatrixXd w_transform;
  Eigen::MatrixXd z_transform;
};

/// Nearest constraint-satisfying parameters: C, D orthonormal in the Gram
/// metric (scale moved into the scores), Sigma_w floored PD, Lambda
/// diagonal (u rotated to principal axes, decreasing variance), A_1. Sigma_w
/// A_1.^T diagonal (v rotated to its eigenvectors, decreasing Gamma), each
/// component's largest coefficient positive, Sigma_e diagonal.
ConstrainedParams enforce_constraints_detailed(const ModelConfig& config, const ModelParams& params,
                                               const Eigen::MatrixXd& residual_cov);
ModelParams enforce_constraints(const ModelConfig& config, const ModelParams& params);

/// Re-express parameters in linearly transformed latent coordinates
/// (amplitude blocks only): u' = Tu u, v' = Tv v. Returns the full residual
/// covariance alongside since it need not stay diagonal.
struct TransformedParams {
  ModelParams params;
  Eigen::MatrixXd residual_cov;
};
TransformedParams transform_amplitudes(const ModelConfig& config, const ModelParams& params,
                                       const Eigen::MatrixXd& residual_cov, const Eigen::MatrixXd& Tu,
                                       const Eigen::MatrixXd& Tv);

/// Structural invariant report used by tests and the acceptance suite.
struct ConstraintReport {
  double c_orthonormality = 0.0;  // max |C^T J C - I|
  double d_orthonormality = 0.0;
  double gamma_offdiag_rel = 0.0;  // max |Gamma_ij| / trace scale, i != j
  double lambda_offdiag = 0.0;     // max |Lambda_ij|, i != j
  bool lambda_nonincreasing = true;
  double sigma_w_min_eig_rel = 0.0;
};
ConstraintReport check_constraints(const ModelConfig& config, const ModelParams& params);

}  // namespace wfr
