#include "wfr/inference.hpp"

#include <cmath>
#include <exception>
#include <string>

#include <omp.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "wfr/errors.hpp"
#include "wfr/linalg.hpp"

namespace wfr {

Eigen::MatrixXd duplication_matrix(int d) {
  if (d < 1) throw DomainError("duplication_matrix: dimension must be positive");
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(d * d, d * (d + 1) / 2);
  int k = 0;
  for (int j = 0; j < d; ++j) {
    for (int i = j; i < d; ++i, ++k) {
      D(i + j * d, k) = 1.0;
      D(j + i * d, k) = 1.0;
    }
  }
  return D;
}

int zeta_dim(int d1, int d2) { return d1 * d2 + d1 * (d1 + 1) / 2; }

Eigen::VectorXd stack_zeta(const Eigen::MatrixXd& A, const Eigen::MatrixXd& sigma_w) {
  const Eigen::VectorXd a = linalg::vec_rows(A);
  const Eigen::VectorXd s = linalg::vech(sigma_w);
  Eigen::VectorXd z(a.size() + s.size());
  z << a, s;
  return z;
}

void unstack_zeta(const Eigen::VectorXd& zeta, int d1, int d2, Eigen::MatrixXd& A, Eigen::MatrixXd& sigma_w) {
  if (zeta.size() != zeta_dim(d1, d2)) throw DomainError("unstack_zeta: wrong length");
  A.resize(d2, d1);
  for (int i = 0; i < d2; ++i)
    for (int j = 0; j < d1; ++j) A(i, j) = zeta(i * d1 + j);
  sigma_w = linalg::unvech(zeta.tail(d1 * (d1 + 1) / 2), d1);
}

Eigen::VectorXd score(const ModelParams& params, const Eigen::MatrixXd& M, const Eigen::MatrixXd& N) {
  const auto d1 = params.sigma_w.rows();
  if ((params.sigma_e.array() <= 0.0).any()) throw DegeneracyError("score: Sigma_e is singular");
  Eigen::LLT<Eigen::MatrixXd> llt(params.sigma_w);
  if (llt.info() != Eigen::Success) throw DegeneracyError("score: Sigma_w is singular");
  const Eigen::MatrixXd sw_inv = llt.solve(Eigen::MatrixXd::Identity(d1, d1));
  const Eigen::VectorXd se_inv = params.sigma_e.cwiseInverse();
  const Eigen::MatrixXd ga = (N - M * params.A.transpose()) * se_inv.asDiagonal();  // d1 x d2
  const Eigen::MatrixXd gs = sw_inv - sw_inv * M * sw_inv;
  const Eigen::VectorXd us = -0.5 * duplication_matrix(static_cast<int>(d1)).transpose() * linalg::vec(gs);
  Eigen::VectorXd u(ga.size() + us.size());
  u << linalg::vec(ga), us;
  return u;
}

Eigen::VectorXd score(const ModelParams& params, const LatentPosterior& post) { return score(params, post.M, post.N); }

Eigen::MatrixXd constraint_jacobian(const ModelConfig& config, const ModelParams& params) {
  const int p2 = config.p2(), d1 = config.d1(), d2 = config.d2();
  const int m = p2 * (p2 - 1) / 2;
  const int d = zeta_dim(d1, d2);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(m, d);
  if (m == 0) return B;
  const Eigen::MatrixXd Dd = duplication_matrix(d1);
  int row = 0;
  for (int j = 1; j < p2; ++j) {
    for (int i = 0; i < j; ++i, ++row) {
      const Eigen::VectorXd ai = params.A.row(i).transpose();
      const Eigen::VectorXd aj = params.A.row(j).transpose();
      B.block(row, i * d1, 1, d1) += (params.sigma_w * aj).transpose();
      B.block(row, j * d1, 1, d1) += (params.sigma_w * ai).transpose();
      Eigen::VectorXd kr(d1 * d1);
      for (int b = 0; b < d1; ++b) kr.segment(b * d1, d1) = aj(b) * ai;  // a_j (x) a_i
      B.block(row, d1 * d2, 1, Dd.cols()) = kr.transpose() * Dd;
    }
  }
  return B;
}

namespace {

Eigen::MatrixXd null_basis(const Eigen::MatrixXd& B, int d, int* rank) {
  if (B.rows() == 0) {
    if (rank != nullptr) *rank = 0;
    return Eigen::MatrixXd::Identity(d, d);
  }
  const Eigen::MatrixXd bbt = B * B.transpose();
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(bbt);
  const Eigen::MatrixXd proj = Eigen::MatrixXd::Identity(d, d) - B.transpose() * cod.pseudoInverse() * B;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(linalg::symmetrize(proj));
  int keep = 0;
  for (int k = 0; k < d; ++k)
    if (eig.eigenvalues()(k) > 0.5) ++keep;
  if (rank != nullptr) *rank = d - keep;
  // eigenvalues ascending: the unit eigenvalues are the trailing ones
  return eig.eigenvectors().rightCols(keep);
}

}  // namespace

Eigen::MatrixXd tangent_projector(const Eigen::MatrixXd& B, int d) {
  if (B.rows() > 0 && B.cols() != d) throw DomainError("tangent_projector: B has the wrong width");
  return null_basis(B, d, nullptr);
}

Eigen::MatrixXd constrained_sandwich(const Eigen::MatrixXd& Xi, const Eigen::MatrixXd& V, double n) {
  const Eigen::MatrixXd s = linalg::symmetrize(Xi.transpose() * V * Xi);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
  const double top = eig.eigenvalues().size() > 0 ? eig.eigenvalues().maxCoeff() : 0.0;
  if (eig.eigenvalues().size() > 0 && !(eig.eigenvalues().minCoeff() > 1e-12 * top && top > 0.0)) {
    throw DegeneracyError("asymptotic covariance: projected information matrix is singular; use the bootstrap");
  }
  const Eigen::MatrixXd inv =
      eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  return linalg::symmetrize(Xi * inv * Xi.transpose() / n);
}

InferenceBundle asymptotic_covariance(const ModelConfig& config, const ModelParams& params,
                                      const std::vector<LatentPosterior>& posteriors) {
  if (posteriors.empty()) throw DomainError("asymptotic_covariance: no posteriors");
  const int d = zeta_dim(config.d1(), config.d2());
  InferenceBundle out;
  out.n = static_cast<int>(posteriors.size());
  out.V = Eigen::MatrixXd::Zero(d, d);
  for (const LatentPosterior& lp : posteriors) {
    const Eigen::VectorXd u = score(params, lp);
    out.V.noalias() += u * u.transpose();
  }
  out.V /= static_cast<double>(out.n);
  out.B = constraint_jacobian(config, params);
  int rank = 0;
  out.Xi = null_basis(out.B, d, &rank);
  out.rank_deficiency = static_cast<int>(out.B.rows()) - rank;
  out.asym_cov = constrained_sandwich(out.Xi, out.V, out.n);
  return out;
}

InferenceBundle asymptotic_covariance(const ModelConfig& config, const FitResult& fit) {
  return asymptotic_covariance(config, fit.params, fit.posteriors);
}

Eigen::MatrixXd a_block(const Eigen::MatrixXd& cov, int d1, int d2) {
  return cov.topLeftCorner(d1 * d2, d1 * d2);
}

BootstrapResult bootstrap_covariance(const ModelConfig& config, const CurveDataset& data, const FitResult& fit,
                                     const BootstrapOptions& options, const FitConfig& fit_config) {
  if (options.reps < 2) throw DomainError("bootstrap_covariance: need at least 2 replicates");
  const std::size_t n = data.size();
  const int reps = options.reps;
  FitConfig fc = fit_config;
  fc.max_iter = options.max_iter;
  fc.threads = 1;
  std::vector<Eigen::VectorXd> stacks(reps);
  std::vector<char> ok(reps, 0);
  const int nt = options.threads > 0 ? options.threads : 0;
#pragma omp parallel for schedule(dynamic) num_threads(nt > 0 ? nt : omp_get_max_threads())
  for (int b = 0; b < reps; ++b) {
    std::seed_seq seq{static_cast<std::uint32_t>(options.seed & 0xffffffffu),
                      static_cast<std::uint32_t>(options.seed >> 32), static_cast<std::uint32_t>(b)};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> idx;
    if (options.resampler) {
      idx = options.resampler(n, rng);
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      idx.resize(n);
      for (auto& k : idx) k = pick(rng);
    }
    try {
      CurveDataset sample;
      std::vector<Eigen::VectorXd> warm;
      sample.reserve(idx.size());
      for (std::size_t k : idx) {
        if (k >= n) throw DomainError("bootstrap: resampled index out of range");
        sample.push_back(data[k]);
        if (!fit.posteriors.empty()) warm.push_back(fit.posteriors[k].mode);
      }
      const FitResult rf = wfr::fit(config, sample, fc, &fit.params, warm.empty() ? nullptr : &warm);
      stacks[b] = linalg::vec_rows(rf.params.A);
      ok[b] = stacks[b].allFinite() ? 1 : 0;
    } catch (const std::exception&) {
      ok[b] = 0;
    }
  }
  BootstrapResult out;
  for (int b = 0; b < reps; ++b) {
    if (ok[b]) {
      out.stacks.push_back(stacks[b]);
    } else {
      ++out.dropped;
    }
  }
  out.kept = static_cast<int>(out.stacks.size());
  if (out.dropped * 5 > reps || out.kept < 2) {
    throw DegeneracyError("bootstrap: " + std::to_string(out.dropped) + " of " + std::to_string(reps) +
                          " replicates failed");
  }
  const auto dim = out.stacks.front().size();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  for (const auto& s : out.stacks) mean += s;
  mean /= out.kept;
  out.cov = Eigen::MatrixXd::Zero(dim, dim);
  for (const auto& s : out.stacks) out.cov.noalias() += (s - mean) * (s - mean).transpose();
  out.cov /= static_cast<double>(out.kept - 1);
  return out;
}

double chi_square_quantile(double prob, int df) {
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(df), prob);
}

double normal_quantile(double prob) { return boost::math::quantile(boost::math::normal_distribution<double>(), prob); }

WaldResult wald_tests(const Eigen::MatrixXd& A, const Eigen::MatrixXd& cov_a, double level) {
  const auto d2 = A.rows(), d1 = A.cols();
  if (cov_a.rows() != d1 * d2 || cov_a.cols() != d1 * d2) throw DomainError("wald_tests: covariance has the wrong size");
  if (!(level > 0.0 && level < 1.0)) throw DomainError("wald_tests: level must lie in (0, 1)");
  WaldResult out;
  const Eigen::VectorXd a = linalg::vec_rows(A);
  Eigen::LLT<Eigen::MatrixXd> llt(linalg::symmetrize(cov_a));
  if (llt.info() != Eigen::Success) throw DegeneracyError("wald_tests: covariance of vec(A^T) is singular");
  out.Q = a.dot(llt.solve(a));
  out.Z.resize(d2, d1);
  for (Eigen::Index i = 0; i < d2; ++i) {
    for (Eigen::Index j = 0; j < d1; ++j) {
      const double v = cov_a(i * d1 + j, i * d1 + j);
      if (!(v > 0.0)) throw DegeneracyError("wald_tests: nonpositive variance");
      out.Z(i, j) = A(i, j) / std::sqrt(v);
    }
  }
  out.df = static_cast<int>(d1 * d2);
  out.q_threshold = chi_square_quantile(1.0 - level, out.df);
  out.z_threshold = normal_quantile(1.0 - level / 2.0);
  return out;
}

}  // namespace wfr
