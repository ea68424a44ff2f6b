#include "wfr/posterior.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "wfr/errors.hpp"
#include "wfr/linalg.hpp"
#include "wfr/quadrature.hpp"

namespace wfr {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr int kMaxLocal = 8;

}  // namespace

SideEval eval_side(const ModelConfig& config, const ModelParams& params, Side side, const Eigen::VectorXd& grid,
                   const Eigen::VectorXd& scores, const Eigen::VectorXd& theta, bool with_jacobian) {
  const SplineBasis& basis = config.basis(side);
  const int p = config.p(side), r = config.r(side), q = config.q(side), deg = basis.degree();
  const Eigen::MatrixXd& comp = params.components(side);
  const Eigen::VectorXd coef = params.mean_coef(side) + comp * scores;
  const WarpedGrid wg = inverse_warp_grid(config.warp(side), theta,
                                          std::span<const double>(grid.data(), grid.size()), with_jacobian && r > 0);
  const Eigen::Index nu = grid.size();
  SideEval out;
  out.points = wg.points;
  out.design = Eigen::MatrixXd::Zero(nu, q);
  out.fitted.resize(nu);
  if (with_jacobian) out.jacobian.resize(nu, p + r);
  std::array<double, kMaxLocal> v{}, d{};
  for (Eigen::Index j = 0; j < nu; ++j) {
    const int first = basis.eval_local(wg.points(j), std::span<double>(v.data(), deg + 1),
                                       std::span<double>(d.data(), deg + 1));
    double f = 0.0, slope = 0.0;
    for (int k = 0; k <= deg; ++k) {
      out.design(j, first + k) = v[k];
      f += v[k] * coef(first + k);
      slope += d[k] * coef(first + k);
    }
    out.fitted(j) = f;
    if (with_jacobian) {
      for (int c = 0; c < p; ++c) {
        double s = 0.0;
        for (int k = 0; k <= deg; ++k) s += v[k] * comp(first + k, c);
        out.jacobian(j, c) = s;
      }
      for (int l = 0; l < r; ++l) out.jacobian(j, p + l) = slope * wg.jacobian(j, l);
    }
  }
  return out;
}

CurveObjective::CurveObjective(const ModelConfig& config, const ModelParams& params, const Curve& curve,
                               bool include_y)
    : config_(config), params_(params), include_y_(include_y) {
  check_shapes(config, params);
  const int d1 = config.d1(), d2 = config.d2();
  dim_ = include_y ? d1 + d2 : d1;
  w_dim_ = d1;
  for (int k = 0; k < config.r1(); ++k) theta_idx_.push_back(config.p1() + k);
  if (include_y)
    for (int k = 0; k < config.r2(); ++k) theta_idx_.push_back(d1 + config.p2() + k);

  Eigen::LLT<Eigen::MatrixXd> llt_w(params.sigma_w);
  if (llt_w.info() != Eigen::Success) throw DegeneracyError("posterior: Sigma_w is not positive definite");
  const Eigen::MatrixXd sw_inv = llt_w.solve(Eigen::MatrixXd::Identity(d1, d1));
  double logdet = 2.0 * llt_w.matrixLLT().diagonal().array().log().sum();

  prior_mean_.resize(dim_);
  prior_mean_.head(d1) = config.mu_w();
  if (include_y) {
    if ((params.sigma_e.array() <= 0.0).any()) throw DegeneracyError("posterior: Sigma_e has nonpositive entries");
    prior_mean_.tail(d2) = config.mu_z();
    const Eigen::VectorXd se_inv = params.sigma_e.cwiseInverse();
    const Eigen::MatrixXd at_se = params.A.transpose() * se_inv.asDiagonal();  // d1 x d2
    prior_prec_.resize(dim_, dim_);
    prior_prec_.topLeftCorner(d1, d1) = sw_inv + at_se * params.A;
    prior_prec_.topRightCorner(d1, d2) = -at_se;
    prior_prec_.bottomLeftCorner(d2, d1) = -at_se.transpose();
    prior_prec_.bottomRightCorner(d2, d2) = se_inv.asDiagonal();
    logdet += params.sigma_e.array().log().sum();
  } else {
    prior_prec_ = sw_inv;
  }
  prior_prec_ = linalg::symmetrize(prior_prec_);
  prior_log_norm_ = 0.5 * (dim_ * kLog2Pi + logdet);

  auto add_term = [&](Side side, int offset, const Eigen::VectorXd& grid, const Eigen::VectorXd& obs) {
    SideTerm t;
    t.side = side;
    t.offset = offset;
    t.p = config.p(side);
    t.r = config.r(side);
    t.grid = grid;
    t.obs = obs;
    const double var = params.noise_var(side);
    if (!(var > 0.0)) throw DegeneracyError("posterior: noise variance must be positive");
    t.inv_var = 1.0 / var;
    t.log_norm = 0.5 * static_cast<double>(grid.size()) * (kLog2Pi + std::log(var));
    if (t.r == 0) {
      t.fixed_design = config.basis(side).design(std::span<const double>(grid.data(), grid.size()));
    } else {
      linear_ = false;
    }
    terms_.push_back(std::move(t));
  };
  add_term(Side::x, 0, curve.s, curve.x);
  if (include_y) add_term(Side::y, d1, curve.t, curve.y);
}

double CurveObjective::side_term(const SideTerm& t, const Eigen::VectorXd& xi, Eigen::VectorXd* grad,
                                 Eigen::MatrixXd* hess) const {
  const Eigen::VectorXd scores = xi.segment(t.offset, t.p);
  const Eigen::VectorXd theta = xi.segment(t.offset + t.p, t.r);
  const bool need_jac = grad != nullptr || hess != nullptr;
  Eigen::VectorXd fitted;
  Eigen::MatrixXd jac;
  if (t.r == 0) {
    const Eigen::MatrixXd& comp = params_.components(t.side);
    fitted = t.fixed_design * (params_.mean_coef(t.side) + comp * scores);
    if (need_jac) jac = t.fixed_design * comp;
  } else {
    SideEval ev = eval_side(config_, params_, t.side, t.grid, scores, theta, need_jac);
    fitted = std::move(ev.fitted);
    jac = std::move(ev.jacobian);
  }
  const Eigen::VectorXd resid = t.obs - fitted;
  const int width = t.p + t.r;
  if (grad != nullptr) grad->segment(t.offset, width) -= t.inv_var * (jac.transpose() * resid);
  if (hess != nullptr) hess->block(t.offset, t.offset, width, width) += t.inv_var * (jac.transpose() * jac);
  return 0.5 * t.inv_var * resid.squaredNorm() + t.log_norm;
}

double CurveObjective::value(const Eigen::VectorXd& xi) const {
  if (xi.size() != dim_ || !xi.allFinite()) throw DomainError("posterior: latent vector must be finite");
  const Eigen::VectorXd delta = xi - prior_mean_;
  double f = 0.5 * delta.dot(prior_prec_ * delta) + prior_log_norm_;
  for (const SideTerm& t : terms_) f += side_term(t, xi, nullptr, nullptr);
  return f;
}

double CurveObjective::gradient(const Eigen::VectorXd& xi, Eigen::VectorXd& grad) const {
  if (xi.size() != dim_ || !xi.allFinite()) throw DomainError("posterior: latent vector must be finite");
  const Eigen::VectorXd delta = xi - prior_mean_;
  grad = prior_prec_ * delta;
  double f = 0.5 * delta.dot(grad) + prior_log_norm_;
  for (const SideTerm& t : terms_) f += side_term(t, xi, &grad, nullptr);
  return f;
}

double CurveObjective::gauss_newton(const Eigen::VectorXd& xi, Eigen::VectorXd& grad, Eigen::MatrixXd& hess) const {
  if (xi.size() != dim_ || !xi.allFinite()) throw DomainError("posterior: latent vector must be finite");
  const Eigen::VectorXd delta = xi - prior_mean_;
  grad = prior_prec_ * delta;
  hess = prior_prec_;
  double f = 0.5 * delta.dot(grad) + prior_log_norm_;
  for (const SideTerm& t : terms_) f += side_term(t, xi, &grad, &hess);
  return f;
}

Eigen::MatrixXd CurveObjective::hessian(const Eigen::VectorXd& xi) const {
  if (linear_) {
    Eigen::VectorXd g;
    Eigen::MatrixXd h;
    gauss_newton(xi, g, h);
    return h;
  }
  Eigen::MatrixXd h(dim_, dim_);
  Eigen::VectorXd gp, gm;
  for (int k = 0; k < dim_; ++k) {
    const double step = 1e-4 / std::sqrt(prior_prec_(k, k));
    Eigen::VectorXd xp = xi, xm = xi;
    xp(k) += step;
    xm(k) -= step;
    gradient(xp, gp);
    gradient(xm, gm);
    h.col(k) = (gp - gm) / (2.0 * step);
  }
  return linalg::symmetrize(h);
}

double joint_logdensity(const ModelConfig& config, const ModelParams& params, const Curve& curve,
                        const Eigen::VectorXd& w, const Eigen::VectorXd& z) {
  if (w.size() != config.d1() || z.size() != config.d2()) throw DomainError("joint_logdensity: wrong latent size");
  CurveObjective obj(config, params, curve, true);
  Eigen::VectorXd xi(w.size() + z.size());
  xi << w, z;
  return -obj.value(xi);
}

namespace {

ModeResult minimize_single(const CurveObjective& obj, const Eigen::VectorXd& x0, const ModeOptions& opt) {
  ModeResult res;
  Eigen::VectorXd x = x0, g, gt;
  Eigen::MatrixXd h;
  double f = obj.gauss_newton(x, g, h);
  double lambda = obj.linear() ? 0.0 : 1e-3;
  int it = 0;
  // Levenberg–Marquardt on the Gauss–Newton model.
  for (; it < opt.max_iter; ++it) {
    if (g.norm() <= opt.grad_tol) break;
    Eigen::MatrixXd a = h;
    a.diagonal() *= 1.0 + lambda;
    Eigen::LLT<Eigen::MatrixXd> llt;
    linalg::jittered_llt(a, llt);
    const Eigen::VectorXd step = -llt.solve(g);
    const double predicted = -g.dot(step);
    if (predicted <= 1e-13 * (1.0 + std::abs(f))) break;
    const Eigen::VectorXd xt = x + step;
    double ft = std::numeric_limits<double>::infinity();
    if (xt.allFinite()) ft = obj.value(xt);
    if (std::isfinite(ft) && ft < f) {
      x = xt;
      f = obj.gauss_newton(x, g, h);
      lambda = obj.linear() ? 0.0 : std::max(lambda * 0.3, 1e-10);
    } else {
      lambda = lambda == 0.0 ? 1e-3 : lambda * 4.0;
      if (lambda > 1e10) break;
    }
  }
  // Newton polishing with the full Hessian.
  if (g.norm() > opt.grad_tol) {
    f = obj.gradient(x, g);
    for (int k = 0; k < 30 && g.norm() > opt.grad_tol; ++k, ++it) {
      Eigen::LLT<Eigen::MatrixXd> llt;
      linalg::jittered_llt(obj.hessian(x), llt);
      const Eigen::VectorXd step = -llt.solve(g);
      bool accepted = false;
      double t = 1.0;
      for (int ls = 0; ls < 30; ++ls, t *= 0.5) {
        const Eigen::VectorXd xt = x + t * step;
        const double ft = obj.gradient(xt, gt);
        const bool flat = ft <= f + 1e-12 * (1.0 + std::abs(f)) && gt.norm() < g.norm();
        if (std::isfinite(ft) && (ft < f || flat)) {
          x = xt;
          f = ft;
          g = gt;
          accepted = true;
          break;
        }
      }
      if (!accepted) break;
    }
  }
  res.point = x;
  res.value = f;
  res.grad_norm = g.norm();
  res.converged = res.grad_norm <= opt.grad_tol;
  res.iterations = it;
  return res;
}

}  // namespace

std::vector<Eigen::VectorXd> default_starts(const CurveObjective& obj, const ModeOptions& options) {
  std::vector<Eigen::VectorXd> starts{obj.prior_mean()};
  if (!options.multistart || obj.linear()) return starts;
  for (int idx : obj.theta_indices()) {
    for (double sign : {1.0, -1.0}) {
      Eigen::VectorXd s = obj.prior_mean();
      s(idx) += sign * options.perturbation;
      starts.push_back(std::move(s));
    }
  }
  return starts;
}

ModeResult minimize_objective(const CurveObjective& obj, const std::vector<Eigen::VectorXd>& starts,
                              const ModeOptions& options) {
  if (starts.empty()) throw DomainError("minimize_objective: no starting points");
  ModeResult best;
  bool have = false;
  for (const Eigen::VectorXd& s : starts) {
    ModeResult r = minimize_single(obj, s, options);
    if (!have || r.value < best.value) {
      best = std::move(r);
      have = true;
    }
  }
  return best;
}

Eigen::VectorXd adaptive_mean(const CurveObjective& obj, const ModeResult& mode, const Eigen::MatrixXd& covariance,
                              int nodes) {
  // tensor Gauss-Hermite in the frame xi = mode + L z, L L^T = covariance
  const QuadratureRule gh = gauss_hermite_normal(nodes);
  const int dim = obj.dim();
  const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(covariance).matrixL();
  long total = 1;
  for (int j = 0; j < dim; ++j) total *= nodes;
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(dim), z(dim);
  double mass = 0.0;
  for (long m = 0; m < total; ++m) {
    long q = m;
    double w = 1.0;
    for (int j = 0; j < dim; ++j) {
      const int a = static_cast<int>(q % nodes);
      q /= nodes;
      z(j) = gh.nodes[a];
      w *= gh.weights[a];
    }
    const Eigen::VectorXd pt = mode.point + L * z;
    const double lw = std::log(w) - (obj.value(pt) - mode.value) + 0.5 * z.squaredNorm();
    if (!std::isfinite(lw)) continue;
    const double e = std::exp(lw);
    acc += e * pt;
    mass += e;
  }
  if (!(mass > 0.0) || !acc.allFinite()) return mode.point;
  return acc / mass;
}

LatentPosterior laplace_at(const CurveObjective& obj, const ModeResult& mode, int mean_nodes) {
  LatentPosterior post;
  post.mode = mode.point;
  post.grad_norm = mode.grad_norm;
  post.converged = mode.converged;
  const Eigen::MatrixXd h = obj.hessian(mode.point);
  Eigen::LLT<Eigen::MatrixXd> llt;
  post.jitter = linalg::jittered_llt(h, llt);
  const int dim = obj.dim();
  post.covariance = linalg::symmetrize(llt.solve(Eigen::MatrixXd::Identity(dim, dim)));
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  post.loglik_contrib = -mode.value + 0.5 * dim * kLog2Pi - 0.5 * logdet;
  post.mean = mode.point;
  if (!obj.linear() && mean_nodes > 0) post.mean = adaptive_mean(obj, mode, post.covariance, mean_nodes);
  const Eigen::VectorXd dev = mode.point - obj.prior_mean();
  const int d1 = obj.w_dim(), d2 = dim - d1;
  const Eigen::VectorXd wd = dev.head(d1), zd = dev.tail(d2);
  post.M = linalg::symmetrize(post.covariance.topLeftCorner(d1, d1) + wd * wd.transpose());
  if (d2 > 0) {
    post.N = post.covariance.topRightCorner(d1, d2) + wd * zd.transpose();
    post.K = linalg::symmetrize(post.covariance.bottomRightCorner(d2, d2) + zd * zd.transpose());
  }
  return post;
}

Eigen::VectorXd find_mode(const ModelConfig& config, const ModelParams& params, const Curve& curve,
                          const std::optional<Eigen::VectorXd>& init, const ModeOptions& options) {
  const CurveObjective obj(config, params, curve, true);
  std::vector<Eigen::VectorXd> starts;
  if (init) {
    if (init->size() != obj.dim()) throw DomainError("find_mode: initial point has the wrong length");
    starts.push_back(*init);
  }
  for (auto& s : default_starts(obj, options)) starts.push_back(std::move(s));
  const ModeResult r = minimize_objective(obj, starts, options);
  if (!r.converged) {
    throw OptimizationError("find_mode: gradient norm " + std::to_string(r.grad_norm) + " above tolerance",
                            r.point, -r.value);
  }
  return r.point;
}

LatentPosterior laplace_moments(const ModelConfig& config, const ModelParams& params, const Curve& curve,
                                const ModeOptions& options, const std::vector<Eigen::VectorXd>* starts) {
  const CurveObjective obj(config, params, curve, true);
  const ModeResult r = minimize_objective(obj, starts != nullptr ? *starts : default_starts(obj, options), options);
  return laplace_at(obj, r, options.mean_nodes);
}

CovariatePosterior covariate_posterior(const ModelConfig& config, const ModelParams& params, const Curve& curve,
                                       const ModeOptions& options) {
  const CurveObjective obj(config, params, curve, false);
  const ModeResult r = minimize_objective(obj, default_starts(obj, options), options);
  const LatentPosterior lp = laplace_at(obj, r, options.mean_nodes);
  CovariatePosterior out;
  out.u = lp.mean.head(config.p1());
  out.theta_x = lp.mean.tail(config.r1());
  out.covariance = lp.covariance;
  out.converged = r.converged;
  return out;
}

}  // namespace wfr
