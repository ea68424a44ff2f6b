#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "wfr/errors.hpp"
#include "wfr/simstudy.hpp"

using namespace wfr;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double integrate(const QuadratureRule& rule, const VectorXd& f) {
  double s = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) s += rule.weights[k] * f(static_cast<Eigen::Index>(k));
  return s;
}

}  // namespace

TEST_CASE("simulation truth components are orthonormal") {
  const QuadratureRule rule = metric_rule();
  for (int model = 1; model <= 6; ++model) {
    const SimTruth t = sim_truth(model);
    const FunctionalEstimate f = truth_functions(t, rule);
    REQUIRE(f.phi.cols() == t.p);
    for (int a = 0; a < t.p; ++a) {
      for (int b = 0; b < t.p; ++b) {
        const double ip = integrate(rule, f.phi.col(a).cwiseProduct(f.phi.col(b)));
        const double iq = integrate(rule, f.psi.col(a).cwiseProduct(f.psi.col(b)));
        // the bump normalizer is a 5-digit constant
        CHECK(ip == doctest::Approx(a == b ? 1.0 : 0.0).scale(1.0).epsilon(1e-4));
        CHECK(iq == doctest::Approx(a == b ? 1.0 : 0.0).scale(1.0).epsilon(1e-4));
      }
    }
    for (Eigen::Index k = 0; k < f.mu_x.size(); ++k) CHECK(f.mu_x(k) == t.mu_x(rule.nodes[k]));
    CHECK(sim_truth(model, true).A.cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK_THROWS_AS(sim_truth(7), DomainError);
}

TEST_CASE("data generation is reproducible") {
  const SimTruth t = sim_truth(1);
  const SimData a = generate(t, 5, 42), b = generate(t, 5, 42), c = generate(t, 5, 43);
  REQUIRE(a.data.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(a.data[i].x == b.data[i].x);
    CHECK(a.data[i].t == b.data[i].t);
  }
  CHECK(a.data[0].id == "curve_0001");
  CHECK(a.data[0].x != c.data[0].x);
  for (const Curve& cv : a.data) {
    CHECK(cv.s.size() >= 10);
    CHECK(cv.s.size() <= 20);
    CHECK(std::is_sorted(cv.s.data(), cv.s.data() + cv.s.size()));
    CHECK(cv.s.minCoeff() >= 0.0);
    CHECK(cv.s.maxCoeff() <= 1.0);
  }
  GridSpec eq;
  eq.kind = GridKind::equal;
  eq.size = 5;
  const SimData e = generate(t, 1, 1, eq);
  CHECK(e.data[0].s == (VectorXd(5) << 0.0, 0.25, 0.5, 0.75, 1.0).finished());
  CHECK_THROWS_AS(generate(t, -1, 1), DomainError);
}

TEST_CASE("warping moves features along the time axis") {
  const SimTruth t = sim_truth(1);
  SimCurveTruth lat;
  lat.w = VectorXd::Zero(t.d1());
  lat.z = VectorXd::Zero(t.d2());
  lat.w.tail(t.x_warp.r()) = t.x_warp.reference_theta();
  lat.w.tail(t.x_warp.r()).array() += 0.4;
  const Warp w = Warp::from_jupp(t.x_warp, lat.w.tail(t.x_warp.r()));
  for (double s0 : {0.2, 0.37, 0.8}) {
    const VectorXd g = (VectorXd(1) << w.eval(s0)).finished();
    CHECK(sim_curve(t, lat, Side::x, g)(0) == doctest::Approx(t.mu_x(s0)).epsilon(1e-10));
  }
}

TEST_CASE("independent B-spline warps are monotone") {
  for (int model : {5, 6}) {
    const SimTruth t = sim_truth(model);
    CHECK_FALSE(t.hermite);
    const SimData d = generate(t, 20, 7);
    for (const SimCurveTruth& lat : d.latent) {
      CHECK(std::is_sorted(lat.x_warp_coef.data(), lat.x_warp_coef.data() + lat.x_warp_coef.size()));
      CHECK(std::is_sorted(lat.y_warp_coef.data(), lat.y_warp_coef.data() + lat.y_warp_coef.size()));
    }
    for (const Curve& cv : d.data) CHECK(cv.x.allFinite());
  }
}

TEST_CASE("functional error metrics") {
  const QuadratureRule rule = metric_rule();
  const SimTruth t = sim_truth(3);
  const FunctionalEstimate truth = truth_functions(t, rule);

  const FunctionalErrors exact = functional_bias_rmse({truth, truth}, truth, rule);
  CHECK(exact.beta.rmse == 0.0);
  CHECK(exact.mu_x.bias == 0.0);
  CHECK(exact.phi.size() == 2);

  // component signs do not matter
  FunctionalEstimate flipped = truth;
  flipped.phi.col(1) *= -1.0;
  flipped.psi.col(0) *= -1.0;
  const FunctionalErrors f = functional_bias_rmse({flipped}, truth, rule);
  CHECK(f.phi[1].rmse < 1e-12);
  CHECK(f.psi[0].rmse < 1e-12);

  std::mt19937_64 rng(5);
  std::vector<FunctionalEstimate> reps;
  for (int r = 0; r < 6; ++r) {
    FunctionalEstimate e = truth;
    e.mu_x += 0.1 * oracle::randn(rng, e.mu_x.size());
    e.beta.array() += 0.05 + 0.1 * oracle::unif(rng, -1.0, 1.0);
    reps.push_back(e);
  }
  const FunctionalErrors g = functional_bias_rmse(reps, truth, rule);
  CHECK(g.mu_x.rmse * g.mu_x.rmse >= g.mu_x.bias * g.mu_x.bias);
  CHECK(g.beta.rmse >= g.beta.bias);
  CHECK(g.beta.bias > 0.0);
  // a constant offset c on [0,1]^2 integrates to c^2
  FunctionalEstimate shift = truth;
  shift.beta.array() += 0.2;
  CHECK(functional_bias_rmse({shift}, truth, rule).beta.bias == doctest::Approx(0.2).epsilon(1e-10));
}

TEST_CASE("estimated functions of the reference parameters") {
  const EstimatorSpec spec = warped_estimator(1);
  const ModelConfig c = estimator_config(spec);
  CHECK(c.r1() == 1);
  ModelParams p = zero_params(c);
  p.m_x.setConstant(2.0);
  const FunctionalEstimate f = estimate_functions(c, p, metric_rule());
  CHECK((f.mu_x.array() - 2.0).abs().maxCoeff() < 1e-12);
  CHECK(f.beta.cwiseAbs().maxCoeff() == 0.0);
  CHECK(ordinary_estimator(2).x_knots.empty());
  const auto pe = prediction_estimators(1);
  CHECK(pe.size() == 4);
}

TEST_CASE("small study") {
  StudyConfig cfg;
  cfg.models = {1};
  cfg.sizes = {30};
  cfg.reps = 0;
  const StudyReport empty = run_study(cfg);
  CHECK(empty.estimation.empty());
  CHECK(empty.fits.empty());

  cfg.reps = 2;
  cfg.prediction = true;
  cfg.n_test = 5;
  cfg.fit.max_iter = 40;
  cfg.threads = 1;
  const StudyReport a = run_study(cfg);
  CHECK(a.estimation.size() == 2);
  CHECK(a.prediction.size() == 4);
  CHECK(a.fits.size() == 8);
  for (const FitRecord& r : a.fits) {
    CHECK_FALSE(r.failed);
    CHECK(r.constraints.c_orthonormality < 1e-8);
  }
  cfg.threads = 2;
  const StudyReport b = run_study(cfg);
  REQUIRE(b.estimation.size() == 2);
  CHECK(a.estimation[0].errors.beta.rmse == b.estimation[0].errors.beta.rmse);
  CHECK(a.prediction[1].rmse == b.prediction[1].rmse);
}
