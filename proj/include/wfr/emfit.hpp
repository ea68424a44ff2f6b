#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "wfr/estep.hpp"
#include "wfr/model.hpp"
#include "wfr/posterior.hpp"

namespace wfr {

struct FitConfig {
  int max_iter = 500;
  double rel_tol = 1e-6;  // on the log-likelihood change
  ModeOptions mode;
  std::uint64_t seed = 0;
  int threads = 0;  // 1 = serial reference E-step, <= 0 = OpenMP default
  double init_warp_var = 0.01;
  double mean_ridge = 1e-8;
  /// SQUAREM extrapolation between EM steps; false gives plain EM.
  bool accelerate = true;
};

struct FitResult {
  ModelParams params;
  std::vector<double> loglik_trace;  // Laplace log-likelihood at each iterate; last entry at params
  std::vector<LatentPosterior> posteriors;
  bool converged = false;
  int iterations = 0;
  int nonconverged_modes = 0;  // in the final E-step
};

/// Starting values: pooled penalized-spline means, principal components of
/// per-curve ridge fits in the J metric, A_11 by least squares of the
/// initial response scores on the covariate scores, theta at theta0.
ModelParams initialize(const ModelConfig& config, const CurveDataset& data, const FitConfig& fit_config = {});

/// Least-squares coefficient matrix of v on u (rows of the score matrices
/// are curves); zero when u has no columns.
Eigen::MatrixXd regress_scores(const Eigen::MatrixXd& v, const Eigen::MatrixXd& u);

struct EmStepResult {
  ModelParams params;  // updated parameters
  double loglik = 0.0;  // Laplace log-likelihood at the input parameters
  EStepResult estep;
  /// Posterior modes expressed in the updated latent coordinates.
  std::vector<Eigen::VectorXd> warm;
};

/// E-step at `params`, then the M-step and constraint enforcement.
EmStepResult em_step(const ModelConfig& config, const ModelParams& params, const CurveDataset& data,
                     const FitConfig& fit_config = {}, const std::vector<Eigen::VectorXd>* warm = nullptr);

/// M-step alone from given posteriors. Also returns the latent coordinate
/// transforms applied (for warm starts).
struct MStepResult {
  ModelParams params;
  Eigen::MatrixXd w_transform;
  Eigen::MatrixXd z_transform;
};
MStepResult m_step(const ModelConfig& config, const ModelParams& params, const CurveDataset& data,
                   const std::vector<LatentPosterior>& posteriors, const FitConfig& fit_config = {});

/// EM until the relative log-likelihood change drops below rel_tol or
/// max_iter EM steps have been taken. `start` replaces initialize(); `warm` seeds the
/// first E-step.
FitResult fit(const ModelConfig& config, const CurveDataset& data, const FitConfig& fit_config = {},
              const ModelParams* start = nullptr, const std::vector<Eigen::VectorXd>* warm = nullptr);

}  // namespace wfr
