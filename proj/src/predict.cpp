#include "wfr/predict.hpp"

#include <cmath>
#include <exception>

#include <omp.h>

#include "wfr/errors.hpp"

namespace wfr {

Prediction predict(const ModelConfig& config, const ModelParams& params, const Curve& x_new,
                   const Eigen::VectorXd& out_grid, const ModeOptions& options) {
  if (x_new.s.size() != x_new.x.size() || x_new.s.size() == 0) throw DomainError("predict: bad covariate curve");
  for (Eigen::Index j = 0; j < x_new.s.size(); ++j)
    if (!config.basis(Side::x).contains(x_new.s(j))) throw DomainError("predict: covariate grid outside the domain");
  const CovariatePosterior cp = covariate_posterior(config, params, x_new, options);
  Prediction out;
  out.u = cp.u;
  out.theta_x = cp.theta_x;
  out.converged = cp.converged;
  Eigen::VectorXd w(config.d1());
  w << cp.u, cp.theta_x;
  const Eigen::VectorXd z = config.mu_z() + params.A * (w - config.mu_w());
  out.v = z.head(config.p2());
  out.theta_y = z.tail(config.r2());
  out.grid = out_grid;
  out.values = reconstruct_curve(config, params, Side::y, out.v, out.theta_y, out_grid);
  return out;
}

std::vector<Prediction> predict_all(const ModelConfig& config, const ModelParams& params, const CurveDataset& x_new,
                                    const std::vector<Eigen::VectorXd>& out_grids, const ModeOptions& options,
                                    int threads) {
  if (out_grids.size() != x_new.size()) throw DomainError("predict_all: one output grid per curve required");
  std::vector<Prediction> out(x_new.size());
  const long n = static_cast<long>(x_new.size());
  if (threads == 1) {
    for (long i = 0; i < n; ++i) out[i] = predict(config, params, x_new[i], out_grids[i], options);
    return out;
  }
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic) num_threads(threads > 0 ? threads : omp_get_max_threads())
  for (long i = 0; i < n; ++i) {
    try {
      out[i] = predict(config, params, x_new[i], out_grids[i], options);
    } catch (...) {
#pragma omp critical(wfr_predict_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

double prediction_rmse(const std::vector<Eigen::VectorXd>& truth, const std::vector<Eigen::VectorXd>& predicted) {
  if (truth.size() != predicted.size() || truth.empty()) throw DomainError("prediction_rmse: curve counts differ");
  double ss = 0.0;
  Eigen::Index count = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i].size() != predicted[i].size()) throw DomainError("prediction_rmse: grid lengths differ");
    ss += (truth[i] - predicted[i]).squaredNorm();
    count += truth[i].size();
  }
  if (count == 0) throw DomainError("prediction_rmse: empty grids");
  return std::sqrt(ss / static_cast<double>(count));
}

}  // namespace wfr
