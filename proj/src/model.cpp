#include "wfr/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wfr/errors.hpp"
#include "wfr/linalg.hpp"

namespace wfr {

namespace {

constexpr double kSigmaWFloorRel = 1e-8;
constexpr double kSigmaEFloorRel = 1e-8;
constexpr double kSigmaEFloorAbs = 1e-12;
constexpr double kOffDiagTol = 1e-14;

Eigen::MatrixXd block_diag(const Eigen::MatrixXd& a, Eigen::Index identity_dim) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Identity(a.rows() + identity_dim, a.cols() + identity_dim);
  out.topLeftCorner(a.rows(), a.cols()) = a;
  return out;
}

double max_offdiag(const Eigen::MatrixXd& m) {
  double v = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (i != j) v = std::max(v, std::abs(m(i, j)));
  return v;
}

// Orthogonal matrix whose columns are eigenvectors of symmetric s ordered by
// decreasing `order_key(eigvecs)`; identity-permutation path when s is
// already diagonal so ties don't produce arbitrary rotations.
Eigen::MatrixXd principal_axes(const Eigen::MatrixXd& s, const Eigen::MatrixXd& extra_diag) {
  const Eigen::Index n = s.rows();
  if (n == 0) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd vecs;
  const double scale = std::max(s.diagonal().cwiseAbs().sum(), 1e-300);
  if (max_offdiag(s) <= kOffDiagTol * scale) {
    vecs = Eigen::MatrixXd::Identity(n, n);
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(linalg::symmetrize(s));
    vecs = eig.eigenvectors();
  }
  Eigen::VectorXd key = (vecs.transpose() * s * vecs).diagonal();
  if (extra_diag.size() > 0) key += (vecs.transpose() * extra_diag * vecs).diagonal();
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return key(a) > key(b); });
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index k = 0; k < n; ++k) out.col(k) = vecs.col(idx[k]);
  return out;
}

}  // namespace

ModelConfig::ModelConfig(SplineBasis x_basis, SplineBasis y_basis, WarpSpec x_warp, WarpSpec y_warp, int p1,
                         int p2)
    : x_basis_(std::move(x_basis)),
      y_basis_(std::move(y_basis)),
      x_warp_(std::move(x_warp)),
      y_warp_(std::move(y_warp)),
      p1_(p1),
      p2_(p2) {
  if (p1_ < 0 || p2_ < 0) throw DomainError("ModelConfig: component counts must be nonnegative");
  if (p1_ > x_basis_.dim() || p2_ > y_basis_.dim()) {
    throw DomainError("ModelConfig: component count exceeds basis dimension");
  }
  if (d1() < 1 || d2() < 1) throw DomainError("ModelConfig: need p + r >= 1 on each side");
  if (x_warp_.lower() != x_basis_.lower() || x_warp_.upper() != x_basis_.upper() ||
      y_warp_.lower() != y_basis_.lower() || y_warp_.upper() != y_basis_.upper()) {
    throw DomainError("ModelConfig: warp and basis domains must coincide");
  }
  gram_x_ = wfr::gram(x_basis_);
  gram_y_ = wfr::gram(y_basis_);
  theta_x0_ = x_warp_.reference_theta();
  theta_y0_ = y_warp_.reference_theta();
}

Eigen::VectorXd ModelConfig::mu_w() const {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(d1());
  mu.tail(r1()) = theta_x0_;
  return mu;
}

Eigen::VectorXd ModelConfig::mu_z() const {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(d2());
  mu.tail(r2()) = theta_y0_;
  return mu;
}

Eigen::MatrixXd ModelParams::sigma_z() const {
  Eigen::MatrixXd s = A * sigma_w * A.transpose();
  s.diagonal() += sigma_e;
  return linalg::symmetrize(s);
}

Eigen::MatrixXd ModelParams::gamma(int p2) const {
  const Eigen::MatrixXd a1 = A.topRows(p2);
  Eigen::MatrixXd g = a1 * sigma_w * a1.transpose();
  g.diagonal() += sigma_e.head(p2);
  return linalg::symmetrize(g);
}

ModelParams zero_params(const ModelConfig& config) {
  ModelParams p;
  p.A = Eigen::MatrixXd::Zero(config.d2(), config.d1());
  p.sigma_e = Eigen::VectorXd::Ones(config.d2());
  p.sigma_w = Eigen::MatrixXd::Identity(config.d1(), config.d1());
  p.m_x = Eigen::VectorXd::Zero(config.q(Side::x));
  p.m_y = Eigen::VectorXd::Zero(config.q(Side::y));
  p.C = Eigen::MatrixXd::Zero(config.q(Side::x), config.p1());
  p.D = Eigen::MatrixXd::Zero(config.q(Side::y), config.p2());
  return p;
}

void check_shapes(const ModelConfig& config, const ModelParams& p) {
  const bool ok = p.A.rows() == config.d2() && p.A.cols() == config.d1() && p.sigma_e.size() == config.d2() &&
                  p.sigma_w.rows() == config.d1() && p.sigma_w.cols() == config.d1() &&
                  p.m_x.size() == config.q(Side::x) && p.m_y.size() == config.q(Side::y) &&
                  p.C.rows() == config.q(Side::x) && p.C.cols() == config.p1() &&
                  p.D.rows() == config.q(Side::y) && p.D.cols() == config.p2();
  if (!ok) throw DomainError("ModelParams: shapes do not match the model configuration");
}

void check_dataset(const ModelConfig& config, const CurveDataset& data, bool require_y) {
  if (data.empty()) throw DomainError("dataset is empty");
  const auto& bx = config.basis(Side::x);
  const auto& by = config.basis(Side::y);
  for (const Curve& c : data) {
    if (c.s.size() != c.x.size() || c.t.size() != c.y.size()) {
      throw DomainError("curve '" + c.id + "': grid and value lengths differ");
    }
    if (c.s.size() < 1 || (require_y && c.t.size() < 1)) {
      throw DomainError("curve '" + c.id + "': needs at least one observation per side");
    }
    if (!c.x.allFinite() || !c.y.allFinite()) throw DomainError("curve '" + c.id + "': non-finite values");
    for (Eigen::Index j = 0; j < c.s.size(); ++j)
      if (!bx.contains(c.s(j))) throw DomainError("curve '" + c.id + "': x grid outside the domain");
    for (Eigen::Index j = 0; j < c.t.size(); ++j)
      if (!by.contains(c.t(j))) throw DomainError("curve '" + c.id + "': y grid outside the domain");
  }
}

double eval_mean(const ModelConfig& config, const ModelParams& params, Side side, double point) {
  return config.basis(side).eval_spline(params.mean_coef(side), point);
}

Eigen::VectorXd eval_components(const ModelConfig& config, const ModelParams& params, Side side, double point) {
  return params.components(side).transpose() * config.basis(side).eval(point);
}

Eigen::VectorXd reconstruct_curve(const ModelConfig& config, const ModelParams& params, Side side,
                                  const Eigen::VectorXd& scores, const Eigen::VectorXd& theta,
                                  const Eigen::VectorXd& grid) {
  if (scores.size() != config.p(side)) throw DomainError("reconstruct_curve: score length must equal p");
  if (theta.size() != config.r(side)) throw DomainError("reconstruct_curve: theta length must equal r");
  const auto& basis = config.basis(side);
  for (Eigen::Index j = 0; j < grid.size(); ++j)
    if (!basis.contains(grid(j))) throw DomainError("reconstruct_curve: grid outside the domain");
  const WarpedGrid wg = inverse_warp_grid(config.warp(side), theta,
                                          std::span<const double>(grid.data(), grid.size()), false);
  const Eigen::VectorXd coef = params.mean_coef(side) + params.components(side) * scores;
  Eigen::VectorXd out(grid.size());
  for (Eigen::Index j = 0; j < grid.size(); ++j) out(j) = basis.eval_spline(coef, wg.points(j));
  return out;
}

RegressionKernels::RegressionKernels(const ModelConfig& config, const ModelParams& params)
    : x_basis_(config.basis(Side::x)),
      y_basis_(config.basis(Side::y)),
      C_(params.C),
      D_(params.D),
      a11_(params.A.topLeftCorner(config.p2(), config.p1())),
      a12_(params.A.topRightCorner(config.p2(), config.r1())),
      a21_(params.A.bottomLeftCorner(config.r2(), config.p1())) {}

double RegressionKernels::beta(double s, double t) const {
  const Eigen::VectorXd phi = C_.transpose() * x_basis_.eval(s);
  const Eigen::VectorXd psi = D_.transpose() * y_basis_.eval(t);
  return psi.dot(a11_ * phi);
}

Eigen::VectorXd RegressionKernels::gamma1(double t) const {
  return a12_.transpose() * (D_.transpose() * y_basis_.eval(t));
}

Eigen::VectorXd RegressionKernels::gamma2(double s) const { return a21_ * (C_.transpose() * x_basis_.eval(s)); }

Eigen::MatrixXd RegressionKernels::beta_grid(const Eigen::VectorXd& s, const Eigen::VectorXd& t) const {
  const Eigen::MatrixXd phi = x_basis_.design(std::span<const double>(s.data(), s.size())) * C_;  // ns x p1
  const Eigen::MatrixXd psi = y_basis_.design(std::span<const double>(t.data(), t.size())) * D_;  // nt x p2
  return psi * a11_ * phi.transpose();
}

RegressionKernels kernels(const ModelConfig& config, const ModelParams& params) {
  return RegressionKernels(config, params);
}

TransformedParams transform_amplitudes(const ModelConfig& config, const ModelParams& params,
                                       const Eigen::MatrixXd& residual_cov, const Eigen::MatrixXd& Tu,
                                       const Eigen::MatrixXd& Tv) {
  const Eigen::MatrixXd Tw = block_diag(Tu, config.r1());
  const Eigen::MatrixXd Tz = block_diag(Tv, config.r2());
  TransformedParams out{params, residual_cov};
  ModelParams& p = out.params;
  const Eigen::MatrixXd Tw_inv = Tw.inverse();
  p.sigma_w = linalg::symmetrize(Tw * params.sigma_w * Tw.transpose());
  p.A = Tz * params.A * Tw_inv;
  out.residual_cov = linalg::symmetrize(Tz * residual_cov * Tz.transpose());
  p.sigma_e = out.residual_cov.diagonal();
  if (config.p1() > 0) p.C = params.C * Tu.inverse();
  if (config.p2() > 0) p.D = params.D * Tv.inverse();
  return out;
}

ConstrainedParams enforce_constraints_detailed(const ModelConfig& config, const ModelParams& params,
                                               const Eigen::MatrixXd& residual_cov) {
  check_shapes(config, params);
  const int p1 = config.p1(), p2 = config.p2();
  if (!params.sigma_w.allFinite() || !(params.sigma_w.trace() > 0.0)) {
    throw DegeneracyError("enforce_constraints: Sigma_w is not positive definite");
  }
  // Orthonormal components first; their scale moves into the latent coordinates.
  Eigen::MatrixXd Tu0 = Eigen::MatrixXd::Identity(p1, p1), Tv0 = Eigen::MatrixXd::Identity(p2, p2);
  if (p1 > 0) Tu0 = orthonormalizing_transform(params.C, config.gram(Side::x)).inverse();
  if (p2 > 0) Tv0 = orthonormalizing_transform(params.D, config.gram(Side::y)).inverse();
  TransformedParams t0 = transform_amplitudes(config, params, residual_cov, Tu0, Tv0);
  ModelParams p = std::move(t0.params);
  const Eigen::MatrixXd resid = std::move(t0.residual_cov);
  p.sigma_w = linalg::floor_eigenvalues(p.sigma_w, kSigmaWFloorRel);
  {
    Eigen::LLT<Eigen::MatrixXd> llt(p.sigma_w);
    if (llt.info() != Eigen::Success) throw DegeneracyError("enforce_constraints: Sigma_w not PD after flooring");
  }

  // u rotation: principal axes of Lambda, dominant C coefficient positive.
  Eigen::MatrixXd Tu = Eigen::MatrixXd::Identity(p1, p1);
  if (p1 > 0) {
    Eigen::MatrixXd Q = principal_axes(p.sigma_w.topLeftCorner(p1, p1), Eigen::MatrixXd());
    const Eigen::VectorXd sign = dominant_signs(p.C * Q);
    Q = Q * sign.asDiagonal();
    Tu = Q.transpose();
  }
  // v rotation: eigenvectors of A_1. Sigma_w A_1.^T, ordered by Gamma.
  Eigen::MatrixXd Tv = Eigen::MatrixXd::Identity(p2, p2);
  if (p2 > 0) {
    const Eigen::MatrixXd a1 = p.A.topRows(p2);
    const Eigen::MatrixXd G = linalg::symmetrize(a1 * p.sigma_w * a1.transpose());
    Eigen::MatrixXd P = principal_axes(G, resid.topLeftCorner(p2, p2));
    const Eigen::VectorXd sign = dominant_signs(p.D * P);
    P = P * sign.asDiagonal();
    Tv = P.transpose();
  }
  TransformedParams t = transform_amplitudes(config, p, resid, Tu, Tv);
  ConstrainedParams out{std::move(t.params), Eigen::MatrixXd::Identity(config.d1(), config.d1()),
                        Eigen::MatrixXd::Identity(config.d2(), config.d2())};
  out.w_transform.topLeftCorner(p1, p1) = Tu * Tu0;
  out.z_transform.topLeftCorner(p2, p2) = Tv * Tv0;
  ModelParams& q = out.params;
  // Exactly diagonal Lambda after rotation (clears rounding residue).
  for (int i = 0; i < p1; ++i)
    for (int j = 0; j < p1; ++j)
      if (i != j) q.sigma_w(i, j) = 0.0;
  const double e_scale = q.sigma_e.size() > 0 ? q.sigma_e.cwiseAbs().mean() : 0.0;
  q.sigma_e = q.sigma_e.cwiseMax(kSigmaEFloorRel * e_scale + kSigmaEFloorAbs);
  return out;
}

ModelParams enforce_constraints(const ModelConfig& config, const ModelParams& params) {
  check_shapes(config, params);
  return enforce_constraints_detailed(config, params, Eigen::MatrixXd(params.sigma_e.asDiagonal())).params;
}

ConstraintReport check_constraints(const ModelConfig& config, const ModelParams& params) {
  ConstraintReport rep;
  const int p1 = config.p1(), p2 = config.p2();
  if (p1 > 0) {
    rep.c_orthonormality =
        (params.C.transpose() * config.gram(Side::x) * params.C - Eigen::MatrixXd::Identity(p1, p1))
            .cwiseAbs()
            .maxCoeff();
    const Eigen::MatrixXd lam = params.sigma_w.topLeftCorner(p1, p1);
    rep.lambda_offdiag = max_offdiag(lam);
    for (int k = 1; k < p1; ++k)
      if (lam(k, k) > lam(k - 1, k - 1)) rep.lambda_nonincreasing = false;
  }
  if (p2 > 0) {
    rep.d_orthonormality =
        (params.D.transpose() * config.gram(Side::y) * params.D - Eigen::MatrixXd::Identity(p2, p2))
            .cwiseAbs()
            .maxCoeff();
    const Eigen::MatrixXd g = params.gamma(p2);
    const double scale = g.trace() / p2;
    rep.gamma_offdiag_rel = scale > 0.0 ? max_offdiag(g) / scale : max_offdiag(g);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(params.sigma_w);
  const double tr = params.sigma_w.trace() / config.d1();
  rep.sigma_w_min_eig_rel = eig.eigenvalues().minCoeff() / tr;
  return rep;
}

}  // namespace wfr
