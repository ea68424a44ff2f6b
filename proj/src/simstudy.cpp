#include "wfr/simstudy.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <numbers>
#include <random>

#include <omp.h>

#include "wfr/errors.hpp"
#include "wfr/inference.hpp"
#include "wfr/linalg.hpp"
#include "wfr/predict.hpp"

namespace wfr {

namespace {

constexpr double kBumpNorm = 1.6796;

std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
  std::vector<std::uint32_t> words;
  for (std::uint64_t p : parts) {
    words.push_back(static_cast<std::uint32_t>(p & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

// <f, g> on [0, 1] by high-order composite quadrature.
template <class F, class G>
double inner01(F f, G g) {
  static const QuadratureRule rule = composite_gauss_legendre(0.0, 1.0, 400, 8);
  double s = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) s += rule.weights[k] * f(rule.nodes[k]) * g(rule.nodes[k]);
  return s;
}

Eigen::VectorXd equal_grid(int size) {
  Eigen::VectorXd g(size);
  for (int j = 0; j < size; ++j) g(j) = size == 1 ? 0.5 : static_cast<double>(j) / (size - 1);
  return g;
}

Eigen::VectorXd draw_grid(const GridSpec& spec, std::mt19937_64& rng) {
  if (spec.kind == GridKind::equal) return equal_grid(spec.size);
  std::uniform_int_distribution<int> size(spec.nu_min, spec.nu_max);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int nu = size(rng);
  std::vector<double> pts(nu);
  for (double& p : pts) p = unif(rng);
  std::sort(pts.begin(), pts.end());
  return Eigen::Map<Eigen::VectorXd>(pts.data(), nu);
}

const SplineBasis& warp_basis(const SimTruth& truth) {
  thread_local SplineBasis basis = SplineBasis::uniform(0.0, 1.0, truth.warp_basis_interior, 3);
  if (static_cast<int>(basis.interior_knots().size()) != truth.warp_basis_interior) {
    basis = SplineBasis::uniform(0.0, 1.0, truth.warp_basis_interior, 3);
  }
  return basis;
}

Eigen::VectorXd greville(const SplineBasis& b) {
  const auto& t = b.knots();
  Eigen::VectorXd g(b.dim());
  for (int k = 0; k < b.dim(); ++k) {
    double s = 0.0;
    for (int j = 1; j <= b.degree(); ++j) s += t[k + j];
    g(k) = s / b.degree();
  }
  return g;
}

Eigen::VectorXd bspline_inverse_warp(const SplineBasis& basis, const Eigen::VectorXd& coef, const Eigen::VectorXd& grid) {
  const double g0 = basis.eval_spline(coef, 0.0), g1 = basis.eval_spline(coef, 1.0);
  Eigen::VectorXd out(grid.size());
  for (Eigen::Index j = 0; j < grid.size(); ++j) {
    out(j) = std::clamp((basis.eval_spline(coef, grid(j)) - g0) / (g1 - g0), 0.0, 1.0);
  }
  return out;
}

}  // namespace

double normal_density(double s, double mu, double sigma) {
  const double z = (s - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

double SimTruth::mu_x(double s) const { return 0.6 * normal_density(s, 0.3, 0.1) + 0.4 * normal_density(s, 0.6, 0.1); }
double SimTruth::mu_y(double t) const { return 0.6 * normal_density(t, 0.5, 0.1) + 0.4 * normal_density(t, 0.8, 0.1); }

double SimTruth::phi(int k, double s) const {
  const double first = normal_density(s, 0.3, 0.1) / kBumpNorm;
  if (k == 0) return first;
  if (k == 1) return (normal_density(s, 0.6, 0.1) - phi2_proj * first) / phi2_norm;
  throw DomainError("SimTruth::phi: component index out of range");
}

double SimTruth::psi(int k, double t) const {
  const double first = normal_density(t, 0.5, 0.1) / kBumpNorm;
  if (k == 0) return first;
  if (k == 1) return (normal_density(t, 0.8, 0.1) - psi2_proj * first) / psi2_norm;
  throw DomainError("SimTruth::psi: component index out of range");
}

double SimTruth::beta(double s, double t) const {
  double b = 0.0;
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) b += psi(i, t) * A(i, j) * phi(j, s);
  return b;
}

SimTruth sim_truth(int model, bool zero_a) {
  if (model < 1 || model > 6) throw DomainError("sim_truth: model must be 1..6");
  SimTruth t;
  t.model = model;
  t.p = (model == 1 || model == 2 || model == 5) ? 1 : 2;
  t.hermite = model <= 4;
  if (model == 1 || model == 2) {
    t.x_warp = WarpSpec(0.0, 1.0, {0.3});
    t.y_warp = WarpSpec(0.0, 1.0, {0.5});
  } else if (model == 3 || model == 4) {
    t.x_warp = WarpSpec(0.0, 1.0, {0.3, 0.6});
    t.y_warp = WarpSpec(0.0, 1.0, {0.5, 0.8});
  }
  const int d1 = t.d1(), d2 = t.d2();
  t.sigma_w = Eigen::MatrixXd::Zero(d1, d1);
  t.sigma_w(0, 0) = 0.2 * 0.2;
  for (int k = 1; k < d1; ++k) t.sigma_w(k, k) = 0.1 * 0.1;
  t.sigma_e = Eigen::VectorXd::Constant(d2, 0.07 * 0.07);
  t.A = Eigen::MatrixXd::Identity(d2, d1);
  if (model == 2) t.A << 1.0, 0.5, 0.5, 1.0;
  if (model == 4) {
    t.A.topRightCorner(2, 2) = 0.5 * Eigen::MatrixXd::Identity(2, 2);
    t.A.bottomLeftCorner(2, 2) = 0.5 * Eigen::MatrixXd::Identity(2, 2);
  }
  if (zero_a) t.A.setZero();
  if (t.p == 2) {
    auto phi1 = [](double s) { return normal_density(s, 0.3, 0.1) / kBumpNorm; };
    auto g = [](double s) { return normal_density(s, 0.6, 0.1); };
    t.phi2_proj = inner01(g, phi1) / inner01(phi1, phi1);
    const double pp = t.phi2_proj;
    auto r = [&](double s) { return g(s) - pp * phi1(s); };
    t.phi2_norm = std::sqrt(inner01(r, r));
    auto psi1 = [](double s) { return normal_density(s, 0.5, 0.1) / kBumpNorm; };
    auto h = [](double s) { return normal_density(s, 0.8, 0.1); };
    t.psi2_proj = inner01(h, psi1) / inner01(psi1, psi1);
    const double qp = t.psi2_proj;
    auto rr = [&](double s) { return h(s) - qp * psi1(s); };
    t.psi2_norm = std::sqrt(inner01(rr, rr));
  }
  return t;
}

Eigen::VectorXd sim_curve(const SimTruth& truth, const SimCurveTruth& latent, Side side, const Eigen::VectorXd& grid) {
  const bool xs = side == Side::x;
  Eigen::VectorXd pts;
  if (truth.hermite) {
    const WarpSpec& spec = xs ? truth.x_warp : truth.y_warp;
    const Eigen::VectorXd& lat = xs ? latent.w : latent.z;
    const WarpedGrid wg =
        inverse_warp_grid(spec, lat.tail(spec.r()), std::span<const double>(grid.data(), grid.size()), false);
    pts = wg.points;
  } else {
    pts = bspline_inverse_warp(warp_basis(truth), xs ? latent.x_warp_coef : latent.y_warp_coef, grid);
  }
  const Eigen::VectorXd& lat = xs ? latent.w : latent.z;
  Eigen::VectorXd out(grid.size());
  for (Eigen::Index j = 0; j < grid.size(); ++j) {
    const double s = pts(j);
    double v = xs ? truth.mu_x(s) : truth.mu_y(s);
    for (int k = 0; k < truth.p; ++k) v += lat(k) * (xs ? truth.phi(k, s) : truth.psi(k, s));
    out(j) = v;
  }
  return out;
}

SimData generate(const SimTruth& truth, int n, std::uint64_t seed, const GridSpec& grid) {
  if (n < 0) throw DomainError("generate: n must be nonnegative");
  std::mt19937_64 rng(mix_seed({seed}));
  std::normal_distribution<double> normal(0.0, 1.0);
  const int d1 = truth.d1(), d2 = truth.d2();
  const Eigen::MatrixXd lw = linalg::sqrt_psd(truth.sigma_w);
  Eigen::VectorXd mu_w = Eigen::VectorXd::Zero(d1), mu_z = Eigen::VectorXd::Zero(d2);
  if (truth.hermite) {
    mu_w.tail(truth.x_warp.r()) = truth.x_warp.reference_theta();
    mu_z.tail(truth.y_warp.r()) = truth.y_warp.reference_theta();
  }
  const SplineBasis* wb = truth.hermite ? nullptr : &warp_basis(truth);
  const Eigen::VectorXd c0 = wb != nullptr ? greville(*wb) : Eigen::VectorXd();
  SimData out;
  out.data.reserve(n);
  out.latent.reserve(n);
  auto draw = [&](Eigen::Index k) {
    Eigen::VectorXd e(k);
    for (Eigen::Index i = 0; i < k; ++i) e(i) = normal(rng);
    return e;
  };
  for (int i = 0; i < n; ++i) {
    Curve c;
    char id[32];
    std::snprintf(id, sizeof id, "curve_%04d", i + 1);
    c.id = id;
    c.s = draw_grid(grid, rng);
    c.t = draw_grid(grid, rng);
    SimCurveTruth lat;
    lat.w = mu_w + lw * draw(d1);
    const Eigen::VectorXd e = truth.sigma_e.cwiseMax(0.0).cwiseSqrt().cwiseProduct(draw(d2));
    lat.z = mu_z + truth.A * (lat.w - mu_w) + e;
    if (wb != nullptr) {
      lat.x_warp_coef = c0 + truth.warp_coef_sd * draw(c0.size());
      lat.y_warp_coef = c0 + truth.warp_coef_sd * draw(c0.size());
      std::sort(lat.x_warp_coef.data(), lat.x_warp_coef.data() + lat.x_warp_coef.size());
      std::sort(lat.y_warp_coef.data(), lat.y_warp_coef.data() + lat.y_warp_coef.size());
    }
    c.x = sim_curve(truth, lat, Side::x, c.s) + truth.sigma_eps * draw(c.s.size());
    c.y = sim_curve(truth, lat, Side::y, c.t) + truth.sigma_eta * draw(c.t.size());
    out.data.push_back(std::move(c));
    out.latent.push_back(std::move(lat));
  }
  return out;
}

ModelConfig estimator_config(const EstimatorSpec& spec) {
  return ModelConfig(SplineBasis::uniform(0.0, 1.0, spec.n_interior, 3), SplineBasis::uniform(0.0, 1.0, spec.n_interior, 3),
                     WarpSpec(0.0, 1.0, spec.x_knots), WarpSpec(0.0, 1.0, spec.y_knots), spec.p1, spec.p2);
}

EstimatorSpec warped_estimator(int model) {
  EstimatorSpec e;
  e.name = "W";
  const int p = (model == 1 || model == 2 || model == 5) ? 1 : 2;
  e.p1 = e.p2 = p;
  switch (model) {
    case 1:
    case 2:
      e.x_knots = {0.3};
      e.y_knots = {0.5};
      break;
    case 3:
    case 4:
    case 6:
      e.x_knots = {0.45};
      e.y_knots = {0.65};
      break;
    case 5:
      e.x_knots = {0.3, 0.6};
      e.y_knots = {0.5, 0.8};
      break;
    default:
      throw DomainError("warped_estimator: model must be 1..6");
  }
  return e;
}

EstimatorSpec ordinary_estimator(int p, const std::string& name) {
  EstimatorSpec e;
  e.name = name;
  e.p1 = e.p2 = p;
  return e;
}

std::vector<EstimatorSpec> prediction_estimators(int model) {
  EstimatorSpec w = warped_estimator(model);
  const int p = w.p1;
  w.name = "W-" + std::to_string(p * p);
  std::vector<EstimatorSpec> out{w};
  for (int k = p; k <= p + 2; ++k) out.push_back(ordinary_estimator(k, "O-" + std::to_string(k * k)));
  return out;
}

QuadratureRule metric_rule() { return composite_gauss_legendre(0.0, 1.0, 20, 5); }

FunctionalEstimate estimate_functions(const ModelConfig& config, const ModelParams& params,
                                      const QuadratureRule& rule) {
  const std::span<const double> nodes(rule.nodes.data(), rule.nodes.size());
  const Eigen::MatrixXd bx = config.basis(Side::x).design(nodes);
  const Eigen::MatrixXd by = config.basis(Side::y).design(nodes);
  FunctionalEstimate f;
  f.mu_x = bx * params.m_x;
  f.mu_y = by * params.m_y;
  f.phi = bx * params.C;
  f.psi = by * params.D;
  f.beta = f.psi * params.A.topLeftCorner(config.p2(), config.p1()) * f.phi.transpose();
  return f;
}

FunctionalEstimate truth_functions(const SimTruth& truth, const QuadratureRule& rule) {
  const auto m = static_cast<Eigen::Index>(rule.nodes.size());
  FunctionalEstimate f;
  f.mu_x.resize(m);
  f.mu_y.resize(m);
  f.phi.resize(m, truth.p);
  f.psi.resize(m, truth.p);
  for (Eigen::Index a = 0; a < m; ++a) {
    const double s = rule.nodes[a];
    f.mu_x(a) = truth.mu_x(s);
    f.mu_y(a) = truth.mu_y(s);
    for (int k = 0; k < truth.p; ++k) {
      f.phi(a, k) = truth.phi(k, s);
      f.psi(a, k) = truth.psi(k, s);
    }
  }
  f.beta = f.psi * truth.A.topLeftCorner(truth.p, truth.p) * f.phi.transpose();
  return f;
}

namespace {

BiasRmse vector_errors(const std::vector<Eigen::VectorXd>& reps, const Eigen::VectorXd& truth,
                       const Eigen::VectorXd& w) {
  BiasRmse out;
  if (reps.empty()) return out;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(truth.size());
  double mse = 0.0;
  for (const auto& r : reps) {
    mean += r;
    mse += w.dot((r - truth).cwiseAbs2());
  }
  mean /= static_cast<double>(reps.size());
  mse /= static_cast<double>(reps.size());
  out.bias = std::sqrt(w.dot((mean - truth).cwiseAbs2()));
  out.rmse = std::sqrt(mse);
  return out;
}

BiasRmse surface_errors(const std::vector<Eigen::MatrixXd>& reps, const Eigen::MatrixXd& truth,
                        const Eigen::MatrixXd& w2) {
  BiasRmse out;
  if (reps.empty()) return out;
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(truth.rows(), truth.cols());
  double mse = 0.0;
  for (const auto& r : reps) {
    mean += r;
    mse += (w2.array() * (r - truth).array().square()).sum();
  }
  mean /= static_cast<double>(reps.size());
  mse /= static_cast<double>(reps.size());
  out.bias = std::sqrt((w2.array() * (mean - truth).array().square()).sum());
  out.rmse = std::sqrt(mse);
  return out;
}

}  // namespace

FunctionalErrors functional_bias_rmse(const std::vector<FunctionalEstimate>& reps, const FunctionalEstimate& truth,
                                      const QuadratureRule& rule) {
  const Eigen::Map<const Eigen::VectorXd> w(rule.weights.data(), static_cast<Eigen::Index>(rule.weights.size()));
  const Eigen::MatrixXd w2 = w * w.transpose();
  FunctionalErrors out;
  std::vector<Eigen::VectorXd> mx, my;
  std::vector<Eigen::MatrixXd> beta;
  for (const auto& r : reps) {
    mx.push_back(r.mu_x);
    my.push_back(r.mu_y);
    beta.push_back(r.beta);
  }
  out.mu_x = vector_errors(mx, truth.mu_x, w);
  out.mu_y = vector_errors(my, truth.mu_y, w);
  out.beta = surface_errors(beta, truth.beta, w2);
  auto components = [&](bool x_side) {
    std::vector<BiasRmse> cells;
    const Eigen::MatrixXd& tm = x_side ? truth.phi : truth.psi;
    for (Eigen::Index k = 0; k < tm.cols(); ++k) {
      std::vector<Eigen::MatrixXd> surf;
      for (const auto& r : reps) {
        const Eigen::MatrixXd& m = x_side ? r.phi : r.psi;
        if (k < m.cols()) surf.push_back(m.col(k) * m.col(k).transpose());
      }
      cells.push_back(surface_errors(surf, tm.col(k) * tm.col(k).transpose(), w2));
    }
    return cells;
  };
  out.phi = components(true);
  out.psi = components(false);
  return out;
}

namespace {

struct EstimatorOutput {
  FitRecord record;
  std::optional<FunctionalEstimate> functions;
  std::optional<double> pred_mse;
  std::optional<Eigen::VectorXd> a_hat;
  std::optional<Eigen::MatrixXd> asym_cov, boot_cov;
};

double max_decrease(const std::vector<double>& trace) {
  double worst = 0.0;
  for (std::size_t k = 1; k < trace.size(); ++k) {
    const double drop = trace[k - 1] - trace[k];
    if (drop > 0.0) worst = std::max(worst, drop / std::max(std::abs(trace[k]), 1e-300));
  }
  return worst;
}

EstimatorOutput run_estimator(const EstimatorSpec& spec, const SimData& train, const SimData* test,
                              const StudyConfig& cfg, bool inference, std::uint64_t boot_seed,
                              const QuadratureRule& rule) {
  EstimatorOutput out;
  out.record.estimator = spec.name;
  try {
    const ModelConfig mc = estimator_config(spec);
    FitConfig fc = cfg.fit;
    fc.threads = 1;
    const FitResult fr = fit(mc, train.data, fc);
    out.record.converged = fr.converged;
    out.record.iterations = fr.iterations;
    out.record.loglik = fr.loglik_trace.back();
    out.record.max_decrease_rel = max_decrease(fr.loglik_trace);
    out.record.constraints = check_constraints(mc, fr.params);
    out.functions = estimate_functions(mc, fr.params, rule);
    if (test != nullptr) {
      std::vector<Eigen::VectorXd> grids, truth;
      for (const Curve& c : test->data) {
        grids.push_back(c.t);
        truth.push_back(c.y);
      }
      const auto preds = predict_all(mc, fr.params, test->data, grids, fc.mode, 1);
      std::vector<Eigen::VectorXd> values;
      for (const auto& p : preds) values.push_back(p.values);
      const double r = prediction_rmse(truth, values);
      out.pred_mse = r * r;
    }
    if (inference) {
      out.a_hat = linalg::vec_rows(fr.params.A);
      const InferenceBundle ib = asymptotic_covariance(mc, fr);
      out.asym_cov = a_block(ib.asym_cov, mc.d1(), mc.d2());
      if (cfg.boot_reps >= 2) {
        BootstrapOptions bo;
        bo.reps = cfg.boot_reps;
        bo.seed = boot_seed;
        bo.threads = 1;
        out.boot_cov = bootstrap_covariance(mc, train.data, fr, bo, fc).cov;
      }
    }
  } catch (const std::exception& e) {
    out.record.failed = true;
    out.record.error = e.what();
    out.functions.reset();
    out.pred_mse.reset();
    out.a_hat.reset();
  }
  return out;
}

void tail_probabilities(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::MatrixXd>& covs, int d1,
                        std::vector<double>& tail, int& used) {
  const int dim = static_cast<int>(a.front().size());
  tail.assign(1 + d1, 0.0);
  used = 0;
  const double qt = chi_square_quantile(0.9, dim), zt = normal_quantile(0.95);
  for (std::size_t r = 0; r < a.size(); ++r) {
    Eigen::LLT<Eigen::MatrixXd> llt(covs[r]);
    if (llt.info() != Eigen::Success) continue;
    ++used;
    if (a[r].dot(llt.solve(a[r])) >= qt) tail[0] += 1.0;
    for (int j = 0; j < d1; ++j) {
      const double sd = std::sqrt(covs[r](j, j));
      if (sd > 0.0 && std::abs(a[r](j)) / sd >= zt) tail[1 + j] += 1.0;
    }
  }
  if (used > 0)
    for (double& t : tail) t /= used;
}

}  // namespace

StudyReport run_study(const StudyConfig& cfg) {
  StudyReport report;
  if (cfg.reps <= 0) return report;
  const QuadratureRule rule = metric_rule();
  const int nt = cfg.threads > 0 ? cfg.threads : omp_get_max_threads();

  struct Scenario {
    int model, n;
    bool inference;
  };
  std::vector<Scenario> scenarios;
  for (int model : cfg.models) {
    for (int n : cfg.sizes) {
      if (cfg.estimation || cfg.prediction) scenarios.push_back({model, n, false});
      if (cfg.inference) scenarios.push_back({model, n, true});
    }
  }
  for (const Scenario& sc : scenarios) {
    const SimTruth truth = sim_truth(sc.model, sc.inference);
    std::vector<EstimatorSpec> specs;
    if (sc.inference) {
      specs.push_back(warped_estimator(sc.model));
    } else {
      specs.push_back(warped_estimator(sc.model));
      specs.push_back(ordinary_estimator(truth.p));
      if (cfg.prediction) {
        for (int k = truth.p + 1; k <= truth.p + 2; ++k) specs.push_back(ordinary_estimator(k, "O-" + std::to_string(k * k)));
      }
    }
    const bool predicting = !sc.inference && cfg.prediction;
    std::vector<std::vector<EstimatorOutput>> outs(cfg.reps);
#pragma omp parallel for schedule(dynamic) num_threads(nt)
    for (int rep = 0; rep < cfg.reps; ++rep) {
      const auto key = static_cast<std::uint64_t>(sc.inference ? 1 : 0);
      const SimData train = generate(truth, sc.n, mix_seed({cfg.seed, static_cast<std::uint64_t>(sc.model),
                                                            static_cast<std::uint64_t>(sc.n), key,
                                                            static_cast<std::uint64_t>(rep), 0}),
                                     cfg.grid);
      std::optional<SimData> test;
      if (predicting) {
        GridSpec tg;
        tg.kind = GridKind::equal;
        tg.size = cfg.test_grid;
        test = generate(truth, cfg.n_test, mix_seed({cfg.seed, static_cast<std::uint64_t>(sc.model),
                                                     static_cast<std::uint64_t>(sc.n), key,
                                                     static_cast<std::uint64_t>(rep), 1}),
                        tg);
      }
      const std::uint64_t boot_seed = mix_seed({cfg.seed, static_cast<std::uint64_t>(sc.model),
                                                static_cast<std::uint64_t>(sc.n), key,
                                                static_cast<std::uint64_t>(rep), 2});
      for (const EstimatorSpec& spec : specs) {
        EstimatorOutput o = run_estimator(spec, train, test ? &*test : nullptr, cfg, sc.inference, boot_seed, rule);
        o.record.model = sc.model;
        o.record.n = sc.n;
        o.record.rep = rep;
        outs[rep].push_back(std::move(o));
      }
    }
    for (const auto& per_rep : outs)
      for (const auto& o : per_rep) report.fits.push_back(o.record);

    const FunctionalEstimate tf = truth_functions(truth, rule);
    for (std::size_t e = 0; e < specs.size(); ++e) {
      int failed = 0;
      std::vector<FunctionalEstimate> fe;
      std::vector<double> mse;
      for (const auto& per_rep : outs) {
        const EstimatorOutput& o = per_rep[e];
        if (o.record.failed) {
          ++failed;
          continue;
        }
        fe.push_back(*o.functions);
        if (o.pred_mse) mse.push_back(*o.pred_mse);
      }
      if (!sc.inference && cfg.estimation && e < 2) {
        EstimationCell cell;
        cell.model = sc.model;
        cell.n = sc.n;
        cell.estimator = e == 0 ? "W" : "O";
        cell.errors = functional_bias_rmse(fe, tf, rule);
        cell.used = static_cast<int>(fe.size());
        cell.failed = failed;
        report.estimation.push_back(std::move(cell));
      }
      if (predicting) {
        PredictionCell cell;
        cell.model = sc.model;
        cell.n = sc.n;
        const int p = specs[e].p1;
        cell.estimator = (e == 0 ? "W-" : "O-") + std::to_string(p * p);
        double s = 0.0;
        for (double m : mse) s += m;
        cell.rmse = mse.empty() ? std::nan("") : std::sqrt(s / static_cast<double>(mse.size()));
        cell.used = static_cast<int>(mse.size());
        cell.failed = failed;
        report.prediction.push_back(std::move(cell));
      }
    }
    if (sc.inference) {
      std::vector<Eigen::VectorXd> a;
      std::vector<Eigen::MatrixXd> asym, boot;
      for (const auto& per_rep : outs) {
        const EstimatorOutput& o = per_rep[0];
        if (o.record.failed || !o.a_hat) continue;
        a.push_back(*o.a_hat);
        asym.push_back(*o.asym_cov);
        if (o.boot_cov) boot.push_back(*o.boot_cov);
      }
      const int d1 = truth.d1();
      if (a.size() >= 2) {
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(a.front().size());
        for (const auto& v : a) mean += v;
        mean /= static_cast<double>(a.size());
        Eigen::MatrixXd tv = Eigen::MatrixXd::Zero(mean.size(), mean.size());
        for (const auto& v : a) tv += (v - mean) * (v - mean).transpose();
        tv /= static_cast<double>(a.size() - 1);
        InferenceCell cell{sc.model, sc.n, "true", {}, 0};
        tail_probabilities(a, std::vector<Eigen::MatrixXd>(a.size(), tv), d1, cell.tail, cell.used);
        report.inference.push_back(cell);
        InferenceCell ac{sc.model, sc.n, "asymptotic", {}, 0};
        tail_probabilities(a, asym, d1, ac.tail, ac.used);
        report.inference.push_back(ac);
        if (boot.size() == a.size()) {
          InferenceCell bc{sc.model, sc.n, "bootstrap", {}, 0};
          tail_probabilities(a, boot, d1, bc.tail, bc.used);
          report.inference.push_back(bc);
        }
      }
    }
  }
  return report;
}

}  // namespace wfr
