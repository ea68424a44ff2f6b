#include "wfr/emfit.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "wfr/errors.hpp"
#include "wfr/linalg.hpp"

namespace wfr {

namespace {

const Eigen::VectorXd& grid_of(const Curve& c, Side side) { return side == Side::x ? c.s : c.t; }
const Eigen::VectorXd& obs_of(const Curve& c, Side side) { return side == Side::x ? c.x : c.y; }

Eigen::MatrixXd second_difference_penalty(int q) {
  if (q < 3) return Eigen::MatrixXd::Zero(q, q);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(q - 2, q);
  for (int i = 0; i < q - 2; ++i) {
    d(i, i) = 1.0;
    d(i, i + 1) = -2.0;
    d(i, i + 2) = 1.0;
  }
  return d.transpose() * d;
}

Eigen::MatrixXd design_of(const ModelConfig& config, Side side, const Eigen::VectorXd& grid) {
  return config.basis(side).design(std::span<const double>(grid.data(), grid.size()));
}

struct SideInit {
  Eigen::VectorXd mean;
  Eigen::MatrixXd comp;
  Eigen::MatrixXd scores;  // n x p
  double noise = 1.0;
};

SideInit initialize_side(const ModelConfig& config, const CurveDataset& data, Side side) {
  const int q = config.q(side), p = config.p(side);
  const auto n = static_cast<Eigen::Index>(data.size());
  const Eigen::MatrixXd pen = second_difference_penalty(q);

  Eigen::MatrixXd btb = Eigen::MatrixXd::Zero(q, q);
  Eigen::VectorXd btx = Eigen::VectorXd::Zero(q);
  Eigen::Index total = 0;
  double sum = 0.0, sumsq = 0.0;
  for (const Curve& c : data) {
    const Eigen::MatrixXd b = design_of(config, side, grid_of(c, side));
    btb += b.transpose() * b;
    btx += b.transpose() * obs_of(c, side);
    total += b.rows();
    sum += obs_of(c, side).sum();
    sumsq += obs_of(c, side).squaredNorm();
  }
  if (total < q) {
    throw DegeneracyError("initialize: fewer observations than basis functions on the " +
                          std::string(side == Side::x ? "x" : "y") + " side");
  }
  const double scale = btb.trace() / q;
  Eigen::MatrixXd lhs = btb + 1e-3 * scale * pen;
  lhs.diagonal().array() += 1e-10 * scale;
  SideInit out;
  out.mean = lhs.ldlt().solve(btx);

  // Per-curve ridge deviations from the pooled mean.
  Eigen::MatrixXd dev(q, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Curve& c = data[i];
    const Eigen::MatrixXd b = design_of(config, side, grid_of(c, side));
    const Eigen::VectorXd r = obs_of(c, side) - b * out.mean;
    Eigen::MatrixXd li = b.transpose() * b;
    const double kappa = 1e-2 * std::max(li.trace() / q, 1e-12);
    li += kappa * (pen + 1e-3 * Eigen::MatrixXd::Identity(q, q));
    dev.col(i) = li.ldlt().solve(b.transpose() * r);
  }
  const Eigen::MatrixXd& J = config.gram(side);
  out.comp = Eigen::MatrixXd::Zero(q, p);
  out.scores = Eigen::MatrixXd::Zero(n, p);
  if (p > 0) {
    const Eigen::MatrixXd cov = dev * dev.transpose() / static_cast<double>(n);
    const Eigen::MatrixXd jh = linalg::sqrt_psd(J);
    const Eigen::MatrixXd jih = linalg::inverse_sqrt(J);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(linalg::symmetrize(jh * cov * jh));
    const Eigen::MatrixXd vecs = eig.eigenvectors().rightCols(p).rowwise().reverse();
    out.comp = jih * vecs;
    out.scores = (out.comp.transpose() * J * dev).transpose();
  }
  double rss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Curve& c = data[i];
    const Eigen::MatrixXd b = design_of(config, side, grid_of(c, side));
    const Eigen::VectorXd coef = out.mean + out.comp * out.scores.row(i).transpose();
    rss += (obs_of(c, side) - b * coef).squaredNorm();
  }
  const double mean = sum / static_cast<double>(total);
  const double var = std::max(sumsq / static_cast<double>(total) - mean * mean, 0.0);
  out.noise = std::max(rss / static_cast<double>(total), 1e-4 * var + 1e-300);
  return out;
}

double noise_floor(const CurveDataset& data, Side side) {
  double ss = 0.0;
  Eigen::Index total = 0;
  for (const Curve& c : data) {
    ss += obs_of(c, side).squaredNorm();
    total += obs_of(c, side).size();
  }
  return 1e-10 * std::max(ss / static_cast<double>(std::max<Eigen::Index>(total, 1)), 1e-200);
}

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

struct SideUpdate {
  Eigen::VectorXd mean;
  Eigen::MatrixXd comp;
  double noise = 1.0;
};

// Mean and component coefficients by least squares against the design
// frozen at the posterior-mode warp, then the expected residual variance
// (linearized in the warp coordinates).
SideUpdate update_side(const ModelConfig& config, const ModelParams& params, const CurveDataset& data,
                       const std::vector<LatentPosterior>& posts, Side side, double ridge) {
  const int q = config.q(side), p = config.p(side), r = config.r(side);
  const int offset = side == Side::x ? 0 : config.d1();
  const int width = q * (1 + p);
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(width, width);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(width);
  Eigen::Index total = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const LatentPosterior& lp = posts[i];
    const Eigen::VectorXd scores = lp.mode.segment(offset, p);
    const Eigen::VectorXd theta = lp.mode.segment(offset + p, r);
    const SideEval ev = eval_side(config, params, side, grid_of(data[i], side), scores, theta, false);
    Eigen::VectorXd eu(1 + p);
    eu << 1.0, scores;
    Eigen::MatrixXd euu = eu * eu.transpose();
    euu.bottomRightCorner(p, p) += lp.covariance.block(offset, offset, p, p);
    lhs += kron(euu, ev.design.transpose() * ev.design);
    rhs += kron(eu, ev.design.transpose() * obs_of(data[i], side));
    total += ev.design.rows();
  }
  lhs.diagonal().array() += ridge * std::max(lhs.trace() / width, 1e-300);
  const Eigen::VectorXd g = lhs.ldlt().solve(rhs);
  SideUpdate out;
  out.mean = g.head(q);
  out.comp = Eigen::Map<const Eigen::MatrixXd>(g.data() + q, q, p);

  ModelParams next = params;
  (side == Side::x ? next.m_x : next.m_y) = out.mean;
  (side == Side::x ? next.C : next.D) = out.comp;
  double ss = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const LatentPosterior& lp = posts[i];
    const Eigen::VectorXd scores = lp.mode.segment(offset, p);
    const Eigen::VectorXd theta = lp.mode.segment(offset + p, r);
    const SideEval ev = eval_side(config, next, side, grid_of(data[i], side), scores, theta, true);
    const Eigen::MatrixXd cov = lp.covariance.block(offset, offset, p + r, p + r);
    ss += (obs_of(data[i], side) - ev.fitted).squaredNorm() + (ev.jacobian * cov * ev.jacobian.transpose()).trace();
  }
  out.noise = std::max(ss / static_cast<double>(total), noise_floor(data, side));
  return out;
}

}  // namespace

Eigen::MatrixXd regress_scores(const Eigen::MatrixXd& v, const Eigen::MatrixXd& u) {
  if (u.cols() == 0 || v.cols() == 0) return Eigen::MatrixXd::Zero(v.cols(), u.cols());
  const Eigen::MatrixXd utu = u.transpose() * u;
  return (utu.ldlt().solve(u.transpose() * v)).transpose();
}

ModelParams initialize(const ModelConfig& config, const CurveDataset& data, const FitConfig& fit_config) {
  check_dataset(config, data, true);
  const SideInit xs = initialize_side(config, data, Side::x);
  const SideInit ys = initialize_side(config, data, Side::y);
  const int p1 = config.p1(), p2 = config.p2(), d1 = config.d1(), d2 = config.d2();
  const double n = static_cast<double>(data.size());

  ModelParams p = zero_params(config);
  p.m_x = xs.mean;
  p.m_y = ys.mean;
  p.C = xs.comp;
  p.D = ys.comp;
  p.sigma2_eps = xs.noise;
  p.sigma2_eta = ys.noise;

  const Eigen::MatrixXd a11 = regress_scores(ys.scores, xs.scores);
  p.A.topLeftCorner(p2, p1) = a11;

  p.sigma_w = Eigen::MatrixXd::Zero(d1, d1);
  for (int k = 0; k < p1; ++k) p.sigma_w(k, k) = xs.scores.col(k).squaredNorm() / n;
  for (int k = p1; k < d1; ++k) p.sigma_w(k, k) = fit_config.init_warp_var;
  if (p1 > 0) {
    const double top = p.sigma_w.topLeftCorner(p1, p1).diagonal().maxCoeff();
    for (int k = 0; k < p1; ++k) p.sigma_w(k, k) = std::max(p.sigma_w(k, k), 1e-6 * top + 1e-300);
  }

  p.sigma_e = Eigen::VectorXd::Constant(d2, fit_config.init_warp_var);
  if (p2 > 0) {
    const Eigen::MatrixXd res = ys.scores - xs.scores * a11.transpose();
    for (int k = 0; k < p2; ++k) {
      const double tot = ys.scores.col(k).squaredNorm() / n;
      p.sigma_e(k) = std::max(res.col(k).squaredNorm() / n, 0.05 * tot + 1e-300);
    }
  }
  return enforce_constraints(config, p);
}

MStepResult m_step(const ModelConfig& config, const ModelParams& params, const CurveDataset& data,
                   const std::vector<LatentPosterior>& posteriors, const FitConfig& fit_config) {
  const int d1 = config.d1(), d2 = config.d2();
  const double n = static_cast<double>(data.size());
  Eigen::MatrixXd sm = Eigen::MatrixXd::Zero(d1, d1), sn = Eigen::MatrixXd::Zero(d1, d2),
                  sk = Eigen::MatrixXd::Zero(d2, d2);
  for (const LatentPosterior& lp : posteriors) {
    sm += lp.M;
    sn += lp.N;
    sk += lp.K;
  }
  sm = linalg::symmetrize(sm);
  ModelParams next = params;
  // (1) regression of z on w
  Eigen::LLT<Eigen::MatrixXd> llt;
  linalg::jittered_llt(sm, llt);
  next.A = llt.solve(sn).transpose();
  const Eigen::MatrixXd resid_cov = linalg::symmetrize((sk - next.A * sn) / n);
  next.sigma_e = resid_cov.diagonal();
  // (2) latent covariance
  next.sigma_w = sm / n;
  // (3)-(4) functional parameters and noise
  const SideUpdate ux = update_side(config, params, data, posteriors, Side::x, fit_config.mean_ridge);
  const SideUpdate uy = update_side(config, params, data, posteriors, Side::y, fit_config.mean_ridge);
  next.m_x = ux.mean;
  next.C = ux.comp;
  next.sigma2_eps = ux.noise;
  next.m_y = uy.mean;
  next.D = uy.comp;
  next.sigma2_eta = uy.noise;
  // (5) constraints
  ConstrainedParams cp = enforce_constraints_detailed(config, next, resid_cov);
  MStepResult out;
  out.w_transform = std::move(cp.w_transform);
  out.z_transform = std::move(cp.z_transform);
  out.params = std::move(cp.params);
  return out;
}

EmStepResult em_step(const ModelConfig& config, const ModelParams& params, const CurveDataset& data,
                     const FitConfig& fit_config, const std::vector<Eigen::VectorXd>* warm) {
  EmStepResult out;
  // the M-step only needs mode-centred moments
  ModeOptions inner = fit_config.mode;
  inner.mean_nodes = 0;
  out.estep = e_step(config, params, data, inner, warm, fit_config.threads);
  out.loglik = out.estep.loglik;
  MStepResult ms = m_step(config, params, data, out.estep.posteriors, fit_config);
  out.params = std::move(ms.params);
  const int d1 = config.d1(), d2 = config.d2();
  const Eigen::VectorXd mw = config.mu_w(), mz = config.mu_z();
  out.warm.reserve(data.size());
  for (const LatentPosterior& lp : out.estep.posteriors) {
    Eigen::VectorXd xi(d1 + d2);
    xi.head(d1) = mw + ms.w_transform * (lp.mode.head(d1) - mw);
    xi.tail(d2) = mz + ms.z_transform * (lp.mode.tail(d2) - mz);
    out.warm.push_back(std::move(xi));
  }
  return out;
}

namespace {

// Unconstrained coordinates for extrapolation: variances on the log scale,
// Sigma_w through its Cholesky factor with log diagonal.
Eigen::VectorXd pack(const ModelParams& p) {
  const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(p.sigma_w).matrixL();
  const auto d = l.rows();
  Eigen::VectorXd out(p.A.size() + p.sigma_e.size() + d * (d + 1) / 2 + p.m_x.size() + p.m_y.size() + p.C.size() +
                      p.D.size() + 2);
  Eigen::Index k = 0;
  auto put = [&](const Eigen::MatrixXd& m) {
    out.segment(k, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    k += m.size();
  };
  put(p.A);
  put(p.sigma_e.array().log().matrix());
  for (Eigen::Index c = 0; c < d; ++c)
    for (Eigen::Index r = c; r < d; ++r) out(k++) = r == c ? std::log(l(r, c)) : l(r, c);
  put(p.m_x);
  put(p.m_y);
  put(p.C);
  put(p.D);
  out(k++) = std::log(p.sigma2_eps);
  out(k++) = std::log(p.sigma2_eta);
  return out;
}

ModelParams unpack(const Eigen::VectorXd& v, const ModelParams& shape) {
  ModelParams p = shape;
  Eigen::Index k = 0;
  auto get = [&](Eigen::MatrixXd& m) {
    m = Eigen::Map<const Eigen::MatrixXd>(v.data() + k, m.rows(), m.cols());
    k += m.size();
  };
  auto getv = [&](Eigen::VectorXd& m) {
    m = v.segment(k, m.size());
    k += m.size();
  };
  get(p.A);
  getv(p.sigma_e);
  p.sigma_e = p.sigma_e.array().exp().matrix();
  const auto d = p.sigma_w.rows();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index c = 0; c < d; ++c)
    for (Eigen::Index r = c; r < d; ++r) l(r, c) = r == c ? std::exp(v(k++)) : v(k++);
  p.sigma_w = l * l.transpose();
  getv(p.m_x);
  getv(p.m_y);
  get(p.C);
  get(p.D);
  p.sigma2_eps = std::exp(v(k++));
  p.sigma2_eta = std::exp(v(k++));
  return p;
}

}  // namespace

FitResult fit(const ModelConfig& config, const CurveDataset& data, const FitConfig& fit_config,
              const ModelParams* start, const std::vector<Eigen::VectorXd>* warm) {
  if (fit_config.max_iter < 1 || !(fit_config.rel_tol >= 0.0)) throw DomainError("fit: invalid fit configuration");
  check_dataset(config, data, true);
  FitResult res;
  ModelParams params = start != nullptr ? *start : initialize(config, data, fit_config);
  check_shapes(config, params);
  std::vector<Eigen::VectorXd> warm_store;
  if (warm != nullptr) warm_store = *warm;
  bool have_warm = warm != nullptr;

  auto step = [&](const ModelParams& at, bool use_warm, const std::vector<Eigen::VectorXd>& w) {
    ++res.iterations;
    try {
      return em_step(config, at, data, fit_config, use_warm ? &w : nullptr);
    } catch (const DegeneracyError& e) {
      throw DegeneracyError("EM iteration " + std::to_string(res.iterations) + ": " + e.what());
    }
  };
  // Records the log-likelihood at an accepted iterate; true once converged.
  auto record = [&](double loglik) {
    res.loglik_trace.push_back(loglik);
    const std::size_t k = res.loglik_trace.size();
    return k >= 2 && std::abs(res.loglik_trace[k - 1] - res.loglik_trace[k - 2]) <=
                         fit_config.rel_tol * std::abs(res.loglik_trace[k - 1]);
  };
  auto budget = [&] { return res.iterations < fit_config.max_iter; };

  double step_max = 4.0;
  while (budget() && !res.converged) {
    const ModelParams p0 = params;
    EmStepResult s1 = step(p0, have_warm, warm_store);
    have_warm = true;
    res.converged = record(s1.loglik);
    params = std::move(s1.params);
    warm_store = std::move(s1.warm);
    if (res.converged || !fit_config.accelerate || !budget()) continue;

    // SQUAREM: two EM steps, an extrapolated point, then one stabilizing
    // EM step from it. The extrapolation is kept only if it does not lower
    // the log-likelihood.
    const ModelParams p1 = params;
    EmStepResult s2 = step(p1, true, warm_store);
    res.converged = record(s2.loglik);
    params = std::move(s2.params);
    warm_store = std::move(s2.warm);
    if (res.converged || !budget()) continue;

    const Eigen::VectorXd x0 = pack(p0), x1 = pack(p1), x2 = pack(params);
    const Eigen::VectorXd r = x1 - x0, v = x2 - 2.0 * x1 + x0;
    if (!(v.norm() > 0.0)) continue;
    const double alpha = std::clamp(-r.norm() / v.norm(), -step_max, -1.0);
    if (alpha == -1.0) continue;  // plain EM already
    const Eigen::VectorXd x = x0 - 2.0 * alpha * r + alpha * alpha * v;
    if (!x.allFinite()) continue;
    // back onto the constrained set before it is scored
    std::optional<EmStepResult> s3;
    try {
      const ModelParams px = enforce_constraints(config, unpack(x, params));
      s3 = em_step(config, px, data, fit_config, &warm_store);
    } catch (const DegeneracyError&) {
    } catch (const DomainError&) {
    }
    ++res.iterations;
    if (s3 && std::isfinite(s3->loglik) && s3->loglik >= s2.loglik) {
      if (alpha == -step_max) step_max *= 4.0;
      res.converged = record(s3->loglik);
      params = std::move(s3->params);
      warm_store = std::move(s3->warm);
    } else {
      step_max = std::max(4.0, step_max / 4.0);
    }
  }
  EStepResult final_step = e_step(config, params, data, fit_config.mode, have_warm ? &warm_store : nullptr,
                                  fit_config.threads);
  res.loglik_trace.push_back(final_step.loglik);
  res.posteriors = std::move(final_step.posteriors);
  res.nonconverged_modes = final_step.nonconverged;
  res.params = std::move(params);
  return res;
}

}  // namespace wfr
