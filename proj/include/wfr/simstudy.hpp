#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wfr/basis.hpp"
#include "wfr/emfit.hpp"
#include "wfr/model.hpp"
#include "wfr/quadrature.hpp"
#include "wfr/warp.hpp"

namespace wfr {

/// N(mu, sigma^2) density.
double normal_density(double s, double mu, double sigma);

/// Ground truth of simulation Models 1-6. Models 1-4 warp through the
/// Hermite regression model; Models 5-6 use independent sorted-coefficient
/// B-spline warps and carry no warp coordinates in w, z.
struct SimTruth {
  int model = 1;
  int p = 1;
  bool hermite = true;
  WarpSpec x_warp{0.0, 1.0, {}};
  WarpSpec y_warp{0.0, 1.0, {}};
  Eigen::MatrixXd A;        // d2 x d1
  Eigen::MatrixXd sigma_w;  // d1 x d1
  Eigen::VectorXd sigma_e;  // d2
  double sigma_eps = 0.05;
  double sigma_eta = 0.05;
  double warp_coef_sd = 0.05;  // Models 5-6
  int warp_basis_interior = 5;

  int d1() const { return p + x_warp.r(); }
  int d2() const { return p + y_warp.r(); }
  double mu_x(double s) const;
  double mu_y(double t) const;
  double phi(int k, double s) const;
  double psi(int k, double t) const;
  /// psi(t)^T A11 phi(s).
  double beta(double s, double t) const;

  // Second components: (g - proj * first) / norm, g the second Gaussian bump.
  double phi2_proj = 0.0, phi2_norm = 1.0;
  double psi2_proj = 0.0, psi2_norm = 1.0;
};

/// Truth of model 1..6; zero_a sets A = 0 (the inference experiment).
SimTruth sim_truth(int model, bool zero_a = false);

enum class GridKind { random, equal };

struct GridSpec {
  GridKind kind = GridKind::random;
  int nu_min = 10;  // random grids: size uniform on {nu_min..nu_max}, points uniform, sorted
  int nu_max = 20;
  int size = 15;  // equal grids: size points j/(size-1)
};

struct SimCurveTruth {
  Eigen::VectorXd w, z;  // latent vectors (amplitude scores first)
  Eigen::VectorXd x_warp_coef, y_warp_coef;  // sorted B-spline coefficients (Models 5-6)
};

struct SimData {
  CurveDataset data;
  std::vector<SimCurveTruth> latent;
};

SimData generate(const SimTruth& truth, int n, std::uint64_t seed, const GridSpec& grid = {});

/// Noiseless curve of one side for given latent values on a grid.
Eigen::VectorXd sim_curve(const SimTruth& truth, const SimCurveTruth& latent, Side side, const Eigen::VectorXd& grid);

/// Fitted-model specification used by the study.
struct EstimatorSpec {
  std::string name;
  int p1 = 1, p2 = 1;
  std::vector<double> x_knots, y_knots;  // warp knots (empty = no warping)
  int n_interior = 10;                   // equally spaced interior spline knots
};

ModelConfig estimator_config(const EstimatorSpec& spec);
/// Warped estimator "W" for a model (true p, model-specific warp knots).
EstimatorSpec warped_estimator(int model);
/// Unwarped estimator with p components on each side.
EstimatorSpec ordinary_estimator(int p, const std::string& name = "O");

/// Functional parameters on a quadrature grid.
struct FunctionalEstimate {
  Eigen::VectorXd mu_x, mu_y;
  Eigen::MatrixXd phi, psi;  // nodes x p
  Eigen::MatrixXd beta;      // rows t, columns s
};

/// Composite Gauss–Legendre grid used for all integrated metrics.
QuadratureRule metric_rule();
FunctionalEstimate estimate_functions(const ModelConfig& config, const ModelParams& params,
                                      const QuadratureRule& rule);
FunctionalEstimate truth_functions(const SimTruth& truth, const QuadratureRule& rule);

struct BiasRmse {
  double bias = 0.0;
  double rmse = 0.0;
};

struct FunctionalErrors {
  BiasRmse beta, mu_x, mu_y;
  std::vector<BiasRmse> phi, psi;  // on the sign-invariant product surfaces
};

/// Integrated bias and RMSE over replicates (unscaled).
FunctionalErrors functional_bias_rmse(const std::vector<FunctionalEstimate>& reps, const FunctionalEstimate& truth,
                                      const QuadratureRule& rule);

struct StudyConfig {
  std::vector<int> models{1};
  std::vector<int> sizes{50};
  int reps = 10;
  std::uint64_t seed = 1;
  GridSpec grid;
  bool estimation = true;   // bias/rmse of the functional estimates
  bool prediction = false;  // prediction error on new curves
  int n_test = 100;
  int test_grid = 20;
  bool inference = false;  // Wald test tail rates (fits the model with A = 0)
  int boot_reps = 0;
  FitConfig fit;
  int threads = 0;
};

struct FitRecord {
  int model = 0, n = 0, rep = 0;
  std::string estimator;
  bool failed = false;
  std::string error;
  bool converged = false;
  int iterations = 0;
  double loglik = 0.0;
  double max_decrease_rel = 0.0;  // largest per-iteration decrease / |loglik|
  ConstraintReport constraints;
  double sigma_e_offdiag = 0.0;   // Sigma_e stored as a diagonal: always 0
};

struct EstimationCell {
  int model = 0, n = 0;
  std::string estimator;
  FunctionalErrors errors;
  int used = 0, failed = 0;
};

struct PredictionCell {
  int model = 0, n = 0;
  std::string estimator;
  double rmse = 0.0;
  int used = 0, failed = 0;
};

struct InferenceCell {
  int model = 0, n = 0;
  std::string method;  // true / asymptotic / bootstrap
  std::vector<double> tail;  // Q, then Z_11 .. Z_1d1
  int used = 0;
};

struct StudyReport {
  std::vector<EstimationCell> estimation;
  std::vector<PredictionCell> prediction;
  std::vector<InferenceCell> inference;
  std::vector<FitRecord> fits;
};

StudyReport run_study(const StudyConfig& config);

/// Estimators fitted for the prediction table of a model: W-k plus the O ladder.
std::vector<EstimatorSpec> prediction_estimators(int model);

}  // namespace wfr
