#include "wfr/estep.hpp"

#include <exception>

#include <omp.h>

#include "wfr/errors.hpp"

namespace wfr {

namespace {

LatentPosterior curve_posterior(const ModelConfig& config, const ModelParams& params, const Curve& curve,
                                const ModeOptions& options, const std::vector<Eigen::VectorXd>* warm,
                                std::size_t i) {
  const CurveObjective obj(config, params, curve, true);
  if (warm == nullptr) return laplace_at(obj, minimize_objective(obj, default_starts(obj, options), options), options.mean_nodes);
  // Warm start alone; the default starts only when it fails.
  ModeResult best = minimize_objective(obj, {(*warm)[i]}, options);
  if (!best.converged) {
    ModeResult alt = minimize_objective(obj, default_starts(obj, options), options);
    if (alt.value < best.value) best = std::move(alt);
  }
  return laplace_at(obj, best, options.mean_nodes);
}

void check_warm(const CurveDataset& data, const std::vector<Eigen::VectorXd>* warm) {
  if (warm != nullptr && warm->size() != data.size()) throw DomainError("e_step: one warm start per curve required");
}

EStepResult collect(std::vector<LatentPosterior> posts) {
  EStepResult out;
  for (const LatentPosterior& p : posts) {
    out.loglik += p.loglik_contrib;
    if (!p.converged) ++out.nonconverged;
  }
  out.posteriors = std::move(posts);
  return out;
}

}  // namespace

EStepResult e_step_serial(const ModelConfig& config, const ModelParams& params, const CurveDataset& data,
                          const ModeOptions& options, const std::vector<Eigen::VectorXd>* warm) {
  check_warm(data, warm);
  std::vector<LatentPosterior> posts(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) posts[i] = curve_posterior(config, params, data[i], options, warm, i);
  return collect(std::move(posts));
}

EStepResult e_step_parallel(const ModelConfig& config, const ModelParams& params, const CurveDataset& data,
                            const ModeOptions& options, const std::vector<Eigen::VectorXd>* warm, int threads) {
  check_warm(data, warm);
  std::vector<LatentPosterior> posts(data.size());
  std::exception_ptr failure;
  const long n = static_cast<long>(data.size());
  const int nt = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(nt)
  for (long i = 0; i < n; ++i) {
    try {
      posts[i] = curve_posterior(config, params, data[i], options, warm, static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(wfr_estep_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return collect(std::move(posts));
}

EStepResult e_step(const ModelConfig& config, const ModelParams& params, const CurveDataset& data,
                   const ModeOptions& options, const std::vector<Eigen::VectorXd>* warm, int threads) {
  if (threads == 1) return e_step_serial(config, params, data, options, warm);
  return e_step_parallel(config, params, data, options, warm, threads);
}

}  // namespace wfr
