#pragma once

#include <vector>

#include <Eigen/Dense>

#include "wfr/model.hpp"
#include "wfr/posterior.hpp"

namespace wfr {

struct Prediction {
  Eigen::VectorXd u;        // E[u | x]
  Eigen::VectorXd theta_x;  // E[theta_x | x]
  Eigen::VectorXd v;        // predicted response scores
  Eigen::VectorXd theta_y;  // predicted response warp (Jupp coordinates)
  Eigen::VectorXd grid;
  Eigen::VectorXd values;
  bool converged = false;
};

/// Response curve predicted from the covariate observations (x_new.s,
/// x_new.x) on out_grid: z-hat = mu_z + A (w-hat - mu_w).
Prediction predict(const ModelConfig& config, const ModelParams& params, const Curve& x_new,
                   const Eigen::VectorXd& out_grid, const ModeOptions& options = {});

/// Batch version over curves, one output grid per curve; OpenMP over curves
/// (threads == 1 runs serially).
std::vector<Prediction> predict_all(const ModelConfig& config, const ModelParams& params, const CurveDataset& x_new,
                                    const std::vector<Eigen::VectorXd>& out_grids, const ModeOptions& options = {},
                                    int threads = 0);

/// {sum_i ||y_i - yhat_i||^2 / sum_i nu_i}^{1/2}. DomainError on length mismatch.
double prediction_rmse(const std::vector<Eigen::VectorXd>& truth, const std::vector<Eigen::VectorXd>& predicted);

}  // namespace wfr
