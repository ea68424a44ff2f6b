// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   wfr_acceptance [--only 1,2,...] [--reps-scale f] [--out dir]
//
// Criteria 5-7 run simulation studies (about an hour on one core); their
// reports are written to <out>/acceptance_*.json.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "oracles.hpp"
#include "wfr/errors.hpp"
#include "wfr/inference.hpp"
#include "wfr/io.hpp"
#include "wfr/linalg.hpp"
#include "wfr/posterior.hpp"
#include "wfr/simstudy.hpp"
#include "wfr/warp.hpp"

using namespace wfr;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1. warp and Jupp properties on random specs.
Outcome warp_properties() {
  std::mt19937_64 rng(101);
  double min_slope = std::numeric_limits<double>::infinity();
  double jupp_err = 0.0, jupp_inv_err = 0.0, invert_err = 0.0;
  bool endpoints = true;
  for (int k = 0; k < 10000; ++k) {
    const int r = 1 + k % 5;
    const double a = oracle::unif(rng, -1.0, 1.0);
    const double b = a + oracle::unif(rng, 0.5, 3.0);
    std::vector<double> knots(r);
    for (int j = 0; j < r; ++j) knots[j] = a + (b - a) * (j + 1 + oracle::unif(rng, -0.3, 0.3)) / (r + 1);
    const WarpSpec spec(a, b, knots);
    const VectorXd theta = spec.reference_theta() + oracle::randn(rng, r);
    const Warp w = Warp::from_jupp(spec, theta);

    const int n = 1000;
    double prev = w.eval(a);
    for (int j = 1; j <= n; ++j) {
      const double cur = w.eval(j == n ? b : a + (b - a) * j / n);
      min_slope = std::min(min_slope, (cur - prev) * n / (b - a));
      prev = cur;
    }
    endpoints = endpoints && w.eval(a) == a && w.eval(b) == b;

    const VectorXd tau = jupp_inv(spec, theta);
    jupp_err = std::max(jupp_err, (jupp(spec, tau) - theta).cwiseAbs().maxCoeff());
    jupp_inv_err = std::max(jupp_inv_err, (jupp_inv(spec, jupp(spec, tau)) - tau).cwiseAbs().maxCoeff());
    for (int j = 0; j < 10; ++j) {
      const double s = oracle::unif(rng, a, b);
      invert_err = std::max(invert_err, std::abs(w.invert(w.eval(s)) - s));
    }
  }
  Outcome o;
  o.pass = min_slope > 0.0 && endpoints && jupp_err <= 1e-12 && jupp_inv_err <= 1e-12 && invert_err <= 1e-8;
  o.detail = "min slope " + fmt("%.3g", min_slope) + ", endpoints " + (endpoints ? "exact" : "NOT exact") +
             ", jupp round trip " + fmt("%.2g", jupp_err) + " / " + fmt("%.2g", jupp_inv_err) +
             ", invert round trip " + fmt("%.2g", invert_err);
  return o;
}

// 2. no-warp posterior, likelihood and score against the linear-Gaussian formulas.
Outcome linear_gaussian_oracle() {
  std::mt19937_64 rng(202);
  double mom = 0.0, ll = 0.0, sc = 0.0;
  for (int k = 0; k < 50; ++k) {
    const ModelConfig c = oracle::random_config(1 + k % 3, 1 + (k / 3) % 3, 0, 0);
    const ModelParams p = oracle::random_params(c, rng);
    const Curve cv = oracle::draw_dataset(c, p, 1, rng)[0];
    const oracle::LinearGaussian g = oracle::linear_gaussian(c, p, cv);
    VectorXd mean;
    MatrixXd cov;
    oracle::gaussian_posterior(g, mean, cov);
    const LatentPosterior lp = laplace_moments(c, p, cv);
    const int d1 = c.d1();
    const MatrixXd M = cov.topLeftCorner(d1, d1) + mean.head(d1) * mean.head(d1).transpose();
    const MatrixXd N = cov.topRightCorner(d1, c.d2()) + mean.head(d1) * mean.tail(c.d2()).transpose();
    mom = std::max({mom, (lp.mode - mean).cwiseAbs().maxCoeff(), (lp.covariance - cov).cwiseAbs().maxCoeff(),
                    (lp.M - M).cwiseAbs().maxCoeff(), (lp.N - N).cwiseAbs().maxCoeff()});
    const double exact = oracle::gaussian_loglik(g);
    ll = std::max(ll, std::abs(lp.loglik_contrib - exact) / std::max(1.0, std::abs(exact)));
    MatrixXd dA, dS;
    oracle::gaussian_score(p, g, dA, dS);
    VectorXd ref(zeta_dim(d1, c.d2()));
    ref << linalg::vec_rows(dA), duplication_matrix(d1).transpose() * linalg::vec(dS);
    const VectorXd u = score(p, lp);
    sc = std::max(sc, (u - ref).cwiseAbs().maxCoeff() / std::max(1.0, ref.cwiseAbs().maxCoeff()));
  }
  Outcome o;
  o.pass = mom <= 1e-8 && ll <= 1e-8 && sc <= 1e-8;
  o.detail = "50 instances: moments " + fmt("%.2g", mom) + ", loglik (rel) " + fmt("%.2g", ll) + ", score (rel) " +
             fmt("%.2g", sc);
  return o;
}

// Self-normalized importance sampling of the posterior mean with a
// multivariate t(4) proposal at the Laplace mode, 1.5 x its covariance.
VectorXd importance_mean(const CurveObjective& obj, const VectorXd& mode, const MatrixXd& cov, int draws,
                         std::mt19937_64& rng) {
  const int d = obj.dim();
  const double nu = 4.0;
  const MatrixXd L = Eigen::LLT<MatrixXd>(1.5 * cov).matrixL();
  std::normal_distribution<double> z(0.0, 1.0);
  std::chi_squared_distribution<double> chi(nu);
  std::vector<double> logw(draws);
  std::vector<VectorXd> xs(draws);
  double top = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < draws; ++k) {
    VectorXd e(d);
    for (int i = 0; i < d; ++i) e(i) = z(rng);
    const double g = chi(rng) / nu;
    xs[k] = mode + L * e / std::sqrt(g);
    const double delta = e.squaredNorm() / g;
    const double logq = -0.5 * (nu + d) * std::log1p(delta / nu);  // up to a constant
    logw[k] = -obj.value(xs[k]) - logq;
    top = std::max(top, logw[k]);
  }
  VectorXd num = VectorXd::Zero(d);
  double den = 0.0;
  for (int k = 0; k < draws; ++k) {
    const double w = std::exp(logw[k] - top);
    num += w * xs[k];
    den += w;
  }
  return num / den;
}

// 3. Laplace posterior means against importance sampling on fitted Model 1 curves.
Outcome laplace_vs_sampling() {
  const SimData sim = generate(sim_truth(1), 50, 303);
  const ModelConfig c = estimator_config(warped_estimator(1));
  FitConfig fc;
  fc.threads = 1;
  const FitResult f = fit(c, sim.data, fc);
  const ModelParams& p = f.params;
  VectorXd prior_sd(c.d1() + c.d2());
  prior_sd << p.sigma_w.diagonal().cwiseSqrt(), p.sigma_z().diagonal().cwiseSqrt();
  std::mt19937_64 rng(304);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const CurveObjective obj(c, p, sim.data[i]);
    const LatentPosterior lp = laplace_moments(c, p, sim.data[i]);
    const VectorXd is = importance_mean(obj, lp.mode, lp.covariance, 1000000, rng);
    worst = std::max(worst, ((lp.mean - is).cwiseAbs().array() / prior_sd.array()).maxCoeff());
  }
  Outcome o;
  o.pass = worst <= 0.05;
  o.detail = "20 curves, 1e6 draws each: max |Laplace - IS| = " + fmt("%.4f", worst) + " prior SD (limit 0.05)";
  return o;
}

// 4. analytic gradients through the warped designs.
Outcome gradient_checks() {
  std::mt19937_64 rng(404);
  double worst = 0.0;
  for (int r : {1, 2}) {
    const ModelConfig c = oracle::random_config(2, 2, r, r);
    for (int k = 0; k < 20; ++k) {
      const ModelParams p = enforce_constraints(c, oracle::random_params(c, rng));
      const Curve cv = oracle::draw_dataset(c, p, 1, rng)[0];
      const CurveObjective obj(c, p, cv);
      const VectorXd xi = obj.prior_mean() + 0.3 * oracle::randn(rng, obj.dim());
      VectorXd g;
      obj.gradient(xi, g);
      const VectorXd fd = oracle::fd_gradient([&](const VectorXd& x) { return obj.value(x); }, xi, 1e-5);
      worst = std::max(worst, (g - fd).cwiseAbs().maxCoeff() / std::max(1.0, fd.cwiseAbs().maxCoeff()));
    }
  }
  Outcome o;
  o.pass = worst <= 1e-5;
  o.detail = "r = 1, 2 at 20 points each: max relative error " + fmt("%.2g", worst);
  return o;
}

const EstimationCell* find_est(const StudyReport& r, int model, const std::string& name) {
  for (const auto& c : r.estimation)
    if (c.model == model && c.estimator == name) return &c;
  return nullptr;
}

const PredictionCell* find_pred(const StudyReport& r, const std::string& name) {
  for (const auto& c : r.prediction)
    if (c.estimator == name) return &c;
  return nullptr;
}

const InferenceCell* find_inf(const StudyReport& r, const std::string& method) {
  for (const auto& c : r.inference)
    if (c.method == method) return &c;
  return nullptr;
}

StudyReport run_logged(const StudyConfig& cfg, const std::string& label, const std::filesystem::path& out) {
  const auto t0 = std::chrono::steady_clock::now();
  std::fprintf(stderr, "[acceptance] %s: %d reps ...\n", label.c_str(), cfg.reps);
  StudyReport r = run_study(cfg);
  std::fprintf(stderr, "[acceptance] %s done in %.0f s\n", label.c_str(), seconds_since(t0));
  io::write_text((out / ("acceptance_" + label + ".json")).string(), io::study_to_json(r).dump(1) + "\n");
  return r;
}

// 5. beta RMSE, Models 1-4.
Outcome fit_quality(const StudyReport& m1, const StudyReport& m24) {
  const EstimationCell* w1 = find_est(m1, 1, "W");
  const EstimationCell* o1 = find_est(m1, 1, "O");
  if (!w1 || !o1) return {false, "Model 1 cells missing"};
  bool ok = w1->errors.beta.rmse >= 0.15 && w1->errors.beta.rmse <= 0.30 && w1->errors.beta.rmse < o1->errors.beta.rmse;
  std::string d = "M1 W " + fmt("%.3f", w1->errors.beta.rmse) + " O " + fmt("%.3f", o1->errors.beta.rmse);
  for (int model : {2, 3, 4}) {
    const EstimationCell* w = find_est(m24, model, "W");
    const EstimationCell* o = find_est(m24, model, "O");
    if (!w || !o) return {false, "Model " + std::to_string(model) + " cells missing"};
    d += "; M" + std::to_string(model) + " W " + fmt("%.3f", w->errors.beta.rmse) + " O " +
         fmt("%.3f", o->errors.beta.rmse);
    if (model != 3) ok = ok && w->errors.beta.rmse < o->errors.beta.rmse;
  }
  return {ok, d + " (W in [0.15, 0.30] for M1; W < O for M1, M2, M4)"};
}

// 6. prediction RMSE, Model 1.
Outcome prediction_quality(const StudyReport& m1) {
  const PredictionCell* w = find_pred(m1, "W-1");
  const PredictionCell* o = find_pred(m1, "O-1");
  if (!w || !o) return {false, "prediction cells missing"};
  const bool ok = std::abs(w->rmse - 0.14) <= 0.3 * 0.14 && w->rmse <= o->rmse;
  return {ok, "W-1 " + fmt("%.4f", w->rmse) + " (target 0.14 +- 30%), O-1 " + fmt("%.4f", o->rmse)};
}

// 7. Wald calibration under A = 0.
Outcome inference_calibration(const StudyReport& inf) {
  const InferenceCell* t = find_inf(inf, "true");
  const InferenceCell* a = find_inf(inf, "asymptotic");
  if (!t || !a || t->tail.size() != 3 || a->tail.size() != 3) return {false, "inference cells missing"};
  bool ok = true;
  std::string d = "true";
  for (double v : t->tail) {
    ok = ok && v >= 0.06 && v <= 0.14;
    d += " " + fmt("%.3f", v);
  }
  d += "; asymptotic";
  for (std::size_t k = 0; k < 3; ++k) {
    ok = ok && a->tail[k] > t->tail[k];
    d += " " + fmt("%.3f", a->tail[k]);
  }
  return {ok, d + " (Q, Z11, Z12; " + std::to_string(t->used) + " fits)"};
}

// 8. constraints and likelihood traces of every study fit.
Outcome fit_invariants(const std::vector<const StudyReport*>& reports) {
  int fits = 0, failed = 0, bad = 0;
  double c_err = 0.0, g_err = 0.0, l_err = 0.0, drop = 0.0;
  for (const StudyReport* r : reports) {
    for (const FitRecord& f : r->fits) {
      if (f.failed) {
        ++failed;
        continue;
      }
      ++fits;
      const ConstraintReport& c = f.constraints;
      c_err = std::max({c_err, c.c_orthonormality, c.d_orthonormality});
      g_err = std::max(g_err, c.gamma_offdiag_rel);
      l_err = std::max(l_err, c.lambda_offdiag);
      drop = std::max(drop, f.max_decrease_rel);
      if (c.c_orthonormality > 1e-8 || c.d_orthonormality > 1e-8 || c.gamma_offdiag_rel > 1e-6 ||
          c.lambda_offdiag != 0.0 || f.sigma_e_offdiag != 0.0 || f.max_decrease_rel > 1e-4)
        ++bad;
    }
  }
  Outcome o;
  o.pass = fits > 0 && bad == 0;
  o.detail = std::to_string(fits) + " fits (" + std::to_string(failed) + " failed, excluded), " +
             std::to_string(bad) + " violating; max orthonormality " + fmt("%.2g", c_err) + ", Gamma off-diag " +
             fmt("%.2g", g_err) + ", Lambda off-diag " + fmt("%.2g", l_err) + ", trace decrease " +
             fmt("%.2g", drop);
  return o;
}

// 9. covariance formulas.
Outcome theorem_formulas() {
  std::mt19937_64 rng(909);
  double err = 0.0;
  for (int k = 0; k < 20; ++k) {
    const ModelConfig c = oracle::random_config(1 + k % 2, 2 + k % 2, k % 2, 1);
    const ModelParams p = oracle::random_params(c, rng);
    const int d = zeta_dim(c.d1(), c.d2());
    const MatrixXd B = constraint_jacobian(c, p);
    const MatrixXd xi = tangent_projector(B, d);
    err = std::max(err, (B * xi).cwiseAbs().maxCoeff() / std::max(1.0, B.cwiseAbs().maxCoeff()));
    err = std::max(err, (xi.transpose() * xi - MatrixXd::Identity(xi.cols(), xi.cols())).cwiseAbs().maxCoeff());
    const MatrixXd V = oracle::random_spd(rng, d, 1.0);
    const MatrixXd q = Eigen::HouseholderQR<MatrixXd>(
                           Eigen::Map<MatrixXd>(oracle::randn(rng, xi.cols() * xi.cols()).data(), xi.cols(), xi.cols()))
                           .householderQ();
    const MatrixXd s1 = constrained_sandwich(xi, V, 50.0), s2 = constrained_sandwich(xi * q, V, 50.0);
    err = std::max(err, (s1 - s2).cwiseAbs().maxCoeff() / s1.cwiseAbs().maxCoeff());
    const MatrixXd s0 = constrained_sandwich(MatrixXd::Identity(d, d), V, 50.0);
    const MatrixXd vinv = V.inverse() / 50.0;
    err = std::max(err, (s0 - vinv).cwiseAbs().maxCoeff() / vinv.cwiseAbs().maxCoeff());
    const int dd = c.d1();
    const MatrixXd s = oracle::random_spd(rng, dd, 1.0);
    err = std::max(err, (duplication_matrix(dd) * linalg::vech(s) - linalg::vec(s)).cwiseAbs().maxCoeff());
  }
  Outcome o;
  o.pass = err <= 1e-10;
  o.detail = "20 configurations: max deviation " + fmt("%.2g", err);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  double reps_scale = 1.0;
  std::string out = ".";
  app.add_option("--only", only, "Criteria to run")->delimiter(',');
  app.add_option("--reps-scale", reps_scale, "Scale the study replication counts")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "Directory for study reports");
  CLI11_PARSE(app, argc, argv);
  std::set<int> run(only.begin(), only.end());
  if (run.empty()) run = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  const std::filesystem::path dir(out);
  std::filesystem::create_directories(dir);
  auto reps = [&](int n) { return std::max(2, static_cast<int>(n * reps_scale + 0.5)); };

  std::vector<std::pair<int, Outcome>> results;
  auto record = [&](int k, const std::function<Outcome()>& f) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d: %s  %s  [%.1f s]\n", k, o.pass ? "PASS" : "FAIL", o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
    results.emplace_back(k, o);
  };

  if (run.count(1)) record(1, warp_properties);
  if (run.count(2)) record(2, linear_gaussian_oracle);
  if (run.count(3)) record(3, laplace_vs_sampling);
  if (run.count(4)) record(4, gradient_checks);
  if (run.count(9)) record(9, theorem_formulas);

  const bool studies = run.count(5) || run.count(6) || run.count(7) || run.count(8);
  if (studies) {
    StudyReport m1, m24, inf;
    StudyConfig base;
    base.seed = 2024;
    base.sizes = {50};
    const bool need_m1 = run.count(5) || run.count(6) || run.count(8);
    if (need_m1) {
      StudyConfig cfg = base;
      cfg.models = {1};
      cfg.reps = reps(100);
      cfg.prediction = true;
      cfg.n_test = 100;
      cfg.test_grid = 20;
      m1 = run_logged(cfg, "model1", dir);
    }
    if (run.count(5) || run.count(8)) {
      StudyConfig cfg = base;
      cfg.models = {2, 3, 4};
      cfg.reps = reps(100);
      m24 = run_logged(cfg, "models2to4", dir);
    }
    if (run.count(7) || run.count(8)) {
      StudyConfig cfg = base;
      cfg.models = {1};
      cfg.sizes = {200};
      cfg.reps = reps(200);
      cfg.estimation = false;
      cfg.inference = true;
      inf = run_logged(cfg, "inference", dir);
    }
    if (run.count(5)) record(5, [&] { return fit_quality(m1, m24); });
    if (run.count(6)) record(6, [&] { return prediction_quality(m1); });
    if (run.count(7)) record(7, [&] { return inference_calibration(inf); });
    if (run.count(8)) record(8, [&] { return fit_invariants({&m1, &m24, &inf}); });
  }

  int failed = 0;
  for (const auto& [k, o] : results) failed += o.pass ? 0 : 1;
  std::printf("acceptance: %zu criteria, %d failed\n", results.size(), failed);
  return failed == 0 ? 0 : 1;
}
