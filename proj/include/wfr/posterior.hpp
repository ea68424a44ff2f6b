#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "wfr/model.hpp"

namespace wfr {

/// Fitted values of one side on its observation grid for latent block
/// (scores, theta), with the warped design and d fitted / d (scores, theta).
struct SideEval {
  Eigen::VectorXd points;    // omega^{-1}(grid)
  Eigen::MatrixXd design;    // nu x q, rows b(omega^{-1}(s_j))
  Eigen::VectorXd fitted;    // design * (m + C scores)
  Eigen::MatrixXd jacobian;  // nu x (p + r)
};

SideEval eval_side(const ModelConfig& config, const ModelParams& params, Side side, const Eigen::VectorXd& grid,
                   const Eigen::VectorXd& scores, const Eigen::VectorXd& theta, bool with_jacobian);

struct ModeOptions {
  double grad_tol = 1e-6;
  int max_iter = 200;
  double perturbation = 0.3;
  /// Also start from theta0 +- perturbation per warp coordinate.
  bool multistart = true;
  /// Gauss-Hermite nodes per coordinate for the posterior mean around the
  /// Laplace approximation (warped case); 0 reports the mode.
  int mean_nodes = 3;
};

/// Negative log joint density of one curve's data and latent vector
/// xi = (u, theta_x, v, theta_y), or xi = w when the y side is excluded.
/// Holds references to config and params.
class CurveObjective {
 public:
  CurveObjective(const ModelConfig& config, const ModelParams& params, const Curve& curve, bool include_y = true);

  int dim() const { return dim_; }
  /// Length of the w block (the leading part of xi).
  int w_dim() const { return w_dim_; }
  /// Positions of warp coordinates within xi.
  const std::vector<int>& theta_indices() const { return theta_idx_; }
  bool include_y() const { return include_y_; }
  /// True when neither included side is warped (the density is Gaussian in xi).
  bool linear() const { return linear_; }
  const Eigen::VectorXd& prior_mean() const { return prior_mean_; }
  const Eigen::MatrixXd& prior_precision() const { return prior_prec_; }

  double value(const Eigen::VectorXd& xi) const;
  double gradient(const Eigen::VectorXd& xi, Eigen::VectorXd& grad) const;
  /// Value, gradient and prior precision + J^T J / sigma^2.
  double gauss_newton(const Eigen::VectorXd& xi, Eigen::VectorXd& grad, Eigen::MatrixXd& hess) const;
  /// Hessian of value(): analytic in the linear case, central differences of
  /// the analytic gradient otherwise.
  Eigen::MatrixXd hessian(const Eigen::VectorXd& xi) const;

 private:
  struct SideTerm {
    Side side;
    int offset = 0;
    int p = 0, r = 0;
    Eigen::VectorXd grid, obs;
    double inv_var = 1.0;
    double log_norm = 0.0;
    Eigen::MatrixXd fixed_design;  // used when r == 0
  };
  double side_term(const SideTerm& t, const Eigen::VectorXd& xi, Eigen::VectorXd* grad,
                   Eigen::MatrixXd* hess) const;

  const ModelConfig& config_;
  const ModelParams& params_;
  bool include_y_;
  bool linear_ = true;
  int dim_ = 0;
  int w_dim_ = 0;
  std::vector<int> theta_idx_;
  Eigen::VectorXd prior_mean_;
  Eigen::MatrixXd prior_prec_;
  double prior_log_norm_ = 0.0;
  std::vector<SideTerm> terms_;
};

/// log f(x_i|w) + log f(y_i|z) + log f(z|w) + log f(w).
double joint_logdensity(const ModelConfig& config, const ModelParams& params, const Curve& curve,
                        const Eigen::VectorXd& w, const Eigen::VectorXd& z);

struct ModeResult {
  Eigen::VectorXd point;
  double value = 0.0;  // negative log joint density
  double grad_norm = 0.0;
  bool converged = false;
  int iterations = 0;
};

/// Minimizes the objective from each start (Levenberg–Marquardt with the
/// Gauss–Newton matrix, then Newton polishing); returns the best.
ModeResult minimize_objective(const CurveObjective& obj, const std::vector<Eigen::VectorXd>& starts,
                              const ModeOptions& options);
/// Default starting points: prior mean, plus theta perturbations if warped.
std::vector<Eigen::VectorXd> default_starts(const CurveObjective& obj, const ModeOptions& options);

/// Posterior mode of (w, z). Throws OptimizationError (carrying the best
/// iterate) if the gradient tolerance is not met.
Eigen::VectorXd find_mode(const ModelConfig& config, const ModelParams& params, const Curve& curve,
                          const std::optional<Eigen::VectorXd>& init = std::nullopt,
                          const ModeOptions& options = {});

struct LatentPosterior {
  Eigen::VectorXd mode;        // (w, z)
  Eigen::VectorXd mean;        // quadrature mean when warped, else the mode
  Eigen::MatrixXd covariance;  // inverse Hessian at the mode
  double loglik_contrib = 0.0;
  double grad_norm = 0.0;
  bool converged = false;
  double jitter = 0.0;  // relative jitter added to the Hessian, 0 if none
  Eigen::MatrixXd M;    // E[(w - mu_w)(w - mu_w)^T]
  Eigen::MatrixXd N;    // E[(w - mu_w)(z - mu_z)^T]
  Eigen::MatrixXd K;    // E[(z - mu_z)(z - mu_z)^T]

  Eigen::VectorXd w_mean(int d1) const { return mean.head(d1); }
  Eigen::VectorXd z_mean(int d1) const { return mean.tail(mean.size() - d1); }
};

/// Gaussian approximation at a given mode. M, N, K are centred on the mode;
/// `mean` integrates the exact density on the Laplace frame.
LatentPosterior laplace_at(const CurveObjective& obj, const ModeResult& mode, int mean_nodes = 3);

/// Posterior mean by adaptive Gauss-Hermite quadrature, `nodes`^dim points.
Eigen::VectorXd adaptive_mean(const CurveObjective& obj, const ModeResult& mode, const Eigen::MatrixXd& covariance,
                              int nodes);

/// Laplace posterior for one curve. With `starts` given they replace the
/// default starting points. Never throws on non-convergence (flagged instead).
LatentPosterior laplace_moments(const ModelConfig& config, const ModelParams& params, const Curve& curve,
                                const ModeOptions& options = {},
                                const std::vector<Eigen::VectorXd>* starts = nullptr);

struct CovariatePosterior {
  Eigen::VectorXd u;        // E[u | x]
  Eigen::VectorXd theta_x;  // E[theta_x | x]
  Eigen::MatrixXd covariance;
  bool converged = false;
};

/// Laplace posterior of w from the covariate curve alone (curve.t, curve.y ignored).
/// u and theta_x are the corrected posterior mean.
CovariatePosterior covariate_posterior(const ModelConfig& config, const ModelParams& params, const Curve& curve,
                                       const ModeOptions& options = {});

}  // namespace wfr
