#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "wfr/emfit.hpp"
#include "wfr/model.hpp"
#include "wfr/posterior.hpp"

namespace wfr {

/// vec(Sigma) = D v(Sigma) for symmetric Sigma (d^2 x d(d+1)/2).
Eigen::MatrixXd duplication_matrix(int d);

/// zeta = (vec(A^T), v(Sigma_w)).
Eigen::VectorXd stack_zeta(const Eigen::MatrixXd& A, const Eigen::MatrixXd& sigma_w);
void unstack_zeta(const Eigen::VectorXd& zeta, int d1, int d2, Eigen::MatrixXd& A, Eigen::MatrixXd& sigma_w);
int zeta_dim(int d1, int d2);

/// Likelihood score with respect to zeta given the conditional moments M, N
/// of one curve.
Eigen::VectorXd score(const ModelParams& params, const Eigen::MatrixXd& M, const Eigen::MatrixXd& N);
Eigen::VectorXd score(const ModelParams& params, const LatentPosterior& post);

/// Gradients of h_ij = a_i^T Sigma_w a_j (1 <= i < j <= p2) with respect to
/// zeta, one row per pair; a_i is the i-th row of A. Empty when p2 < 2.
Eigen::MatrixXd constraint_jacobian(const ModelConfig& config, const ModelParams& params);

/// Orthonormal basis of the null space of B (d x (d - rank B)).
Eigen::MatrixXd tangent_projector(const Eigen::MatrixXd& B, int d);

/// Xi (Xi^T V Xi)^{-1} Xi^T / n. Throws DegeneracyError if Xi^T V Xi is singular.
Eigen::MatrixXd constrained_sandwich(const Eigen::MatrixXd& Xi, const Eigen::MatrixXd& V, double n);

struct InferenceBundle {
  Eigen::MatrixXd V;         // (1/n) sum U U^T
  Eigen::MatrixXd B;         // constraint Jacobian
  Eigen::MatrixXd Xi;        // tangent basis
  Eigen::MatrixXd asym_cov;  // covariance of zeta-hat
  int n = 0;
  int rank_deficiency = 0;  // m minus the numerical rank of B
};

InferenceBundle asymptotic_covariance(const ModelConfig& config, const ModelParams& params,
                                      const std::vector<LatentPosterior>& posteriors);
InferenceBundle asymptotic_covariance(const ModelConfig& config, const FitResult& fit);

/// Leading d1*d2 block (the vec(A^T) part).
Eigen::MatrixXd a_block(const Eigen::MatrixXd& cov, int d1, int d2);

/// Resampled curve indices for one replicate.
using Resampler = std::function<std::vector<std::size_t>(std::size_t n, std::mt19937_64& rng)>;

struct BootstrapOptions {
  int reps = 50;
  std::uint64_t seed = 0;
  int max_iter = 100;
  int threads = 0;
  Resampler resampler;  // default: uniform with replacement
};

struct BootstrapResult {
  Eigen::MatrixXd cov;  // sample covariance of vec(A^T) over kept replicates
  std::vector<Eigen::VectorXd> stacks;
  int kept = 0;
  int dropped = 0;
};

/// Nonparametric bootstrap over curve pairs with warm-started refits. A
/// replicate whose refit throws is dropped; more than 20% dropped is an error.
BootstrapResult bootstrap_covariance(const ModelConfig& config, const CurveDataset& data, const FitResult& fit,
                                     const BootstrapOptions& options, const FitConfig& fit_config = {});

struct WaldResult {
  double Q = 0.0;
  Eigen::MatrixXd Z;  // d2 x d1, entrywise a_ij / sd(a_ij)
  int df = 0;
  double q_threshold = 0.0;
  double z_threshold = 0.0;
};

/// Q = vec(A^T)^T Sigma^{-1} vec(A^T) and Z; thresholds at the given level
/// (chi-square with d1*d2 degrees of freedom, two-sided normal).
WaldResult wald_tests(const Eigen::MatrixXd& A, const Eigen::MatrixXd& cov_a, double level = 0.10);

double chi_square_quantile(double prob, int df);
double normal_quantile(double prob);

}  // namespace wfr
