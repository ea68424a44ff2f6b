#pragma once

#include <vector>

#include <Eigen/Dense>

#include "wfr/model.hpp"
#include "wfr/posterior.hpp"

namespace wfr {

struct EStepResult {
  std::vector<LatentPosterior> posteriors;
  double loglik = 0.0;  // sum of Laplace contributions, index order
  int nonconverged = 0;
};

/// Per-curve Laplace posteriors. With `warm` (one latent vector per curve)
/// each curve starts from its warm point, falling back to the default
/// multi-start set if that search does not converge.
EStepResult e_step_serial(const ModelConfig& config, const ModelParams& params, const CurveDataset& data,
                          const ModeOptions& options, const std::vector<Eigen::VectorXd>* warm = nullptr);

/// OpenMP version of e_step_serial; threads <= 0 uses the runtime default.
/// Results are identical to the serial version (curves are independent and
/// the log-likelihood is summed in index order).
EStepResult e_step_parallel(const ModelConfig& config, const ModelParams& params, const CurveDataset& data,
                            const ModeOptions& options, const std::vector<Eigen::VectorXd>* warm = nullptr,
                            int threads = 0);

/// Dispatches to the serial version when threads == 1.
EStepResult e_step(const ModelConfig& config, const ModelParams& params, const CurveDataset& data,
                   const ModeOptions& options, const std::vector<Eigen::VectorXd>* warm, int threads);

}  // namespace wfr
