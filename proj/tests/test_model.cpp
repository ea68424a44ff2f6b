#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "wfr/errors.hpp"
#include "wfr/estep.hpp"
#include "wfr/model.hpp"
#include "wfr/quadrature.hpp"

using namespace wfr;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double exact_loglik(const ModelConfig& c, const ModelParams& p, const CurveDataset& data) {
  double s = 0.0;
  for (const Curve& cv : data) s += oracle::gaussian_loglik(oracle::linear_gaussian(c, p, cv));
  return s;
}

}  // namespace

TEST_CASE("config validation") {
  const SplineBasis b = SplineBasis::uniform(0.0, 1.0, 4);
  CHECK_THROWS_AS(ModelConfig(b, b, WarpSpec(0, 1, {}), WarpSpec(0, 1, {}), 0, 0), DomainError);
  CHECK_THROWS_AS(ModelConfig(b, b, WarpSpec(0, 1, {}), WarpSpec(0, 1, {}), 9, 1), DomainError);
  const ModelConfig c(b, b, WarpSpec(0, 1, {0.4}), WarpSpec(0, 1, {}), 1, 2);
  CHECK(c.d1() == 2);
  CHECK(c.d2() == 2);
  CHECK(c.mu_w()(1) == doctest::Approx(std::log(0.6 / 0.4)));
}

TEST_CASE("mean and component evaluation") {
  const ModelConfig c = oracle::random_config(2, 1, 1, 1);
  ModelParams p = zero_params(c);
  CHECK(eval_mean(c, p, Side::x, 0.3) == 0.0);
  p.m_x.setOnes();
  for (double s : {0.0, 0.21, 0.5, 1.0}) CHECK(eval_mean(c, p, Side::x, s) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(eval_components(c, p, Side::x, 0.4).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(eval_mean(c, p, Side::x, 1.5), DomainError);

  std::mt19937_64 rng(4);
  const ModelParams q = enforce_constraints(c, oracle::random_params(c, rng));
  const QuadratureRule rule = composite_gauss_legendre(0.0, 1.0, 70, 6);  // panels align with the knots
  MatrixXd g = MatrixXd::Zero(2, 2);
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    const VectorXd v = eval_components(c, q, Side::x, rule.nodes[k]);
    g += rule.weights[k] * v * v.transpose();
  }
  CHECK((g - MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("curve reconstruction") {
  const ModelConfig c = oracle::random_config(1, 1, 1, 1);
  std::mt19937_64 rng(8);
  const ModelParams p = enforce_constraints(c, oracle::random_params(c, rng));
  const VectorXd grid = VectorXd::LinSpaced(25, 0.0, 1.0);
  const VectorXd mu = reconstruct_curve(c, p, Side::x, VectorXd::Zero(1), c.theta0(Side::x), grid);
  for (Eigen::Index j = 0; j < grid.size(); ++j) CHECK(mu(j) == doctest::Approx(eval_mean(c, p, Side::x, grid(j))));

  const VectorXd u = (VectorXd(1) << 0.7).finished();
  const VectorXd kl = reconstruct_curve(c, p, Side::x, u, c.theta0(Side::x), grid);
  for (Eigen::Index j = 0; j < grid.size(); ++j) {
    const double ref = eval_mean(c, p, Side::x, grid(j)) + 0.7 * eval_components(c, p, Side::x, grid(j))(0);
    CHECK(kl(j) == doctest::Approx(ref).epsilon(1e-12));
  }

  // Single-peak mean: moving the knot image right moves the peak right.
  const ModelConfig one(SplineBasis::uniform(0.0, 1.0, 20), SplineBasis::uniform(0.0, 1.0, 20),
                        WarpSpec(0, 1, {0.5}), WarpSpec(0, 1, {}), 1, 1);
  ModelParams m = zero_params(one);
  for (int k = 0; k < one.q(Side::x); ++k) {
    const double g = (k - 1.5) / (one.q(Side::x) - 3.0);
    m.m_x(k) = std::exp(-0.5 * std::pow((g - 0.5) / 0.1, 2));
  }
  m.C(0, 0) = 1.0;
  const VectorXd dense = VectorXd::LinSpaced(4001, 0.0, 1.0);
  auto peak = [&](double tau) {
    const VectorXd th = jupp(one.warp(Side::x), (VectorXd(1) << tau).finished());
    Eigen::Index arg;
    reconstruct_curve(one, m, Side::x, VectorXd::Zero(1), th, dense).maxCoeff(&arg);
    return dense(arg);
  };
  CHECK(peak(0.6) > peak(0.5));
  CHECK(peak(0.5) > peak(0.4));
}

TEST_CASE("regression kernels") {
  const ModelConfig c = oracle::random_config(2, 2, 1, 1);
  std::mt19937_64 rng(12);
  ModelParams p = enforce_constraints(c, oracle::random_params(c, rng));
  const VectorXd s = VectorXd::LinSpaced(50, 0.0, 1.0), t = VectorXd::LinSpaced(50, 0.0, 1.0);
  const RegressionKernels k(c, p);
  const MatrixXd bg = k.beta_grid(s, t);
  MatrixXd phi(50, 2), psi(50, 2);
  for (int j = 0; j < 50; ++j) {
    phi.row(j) = eval_components(c, p, Side::x, s(j)).transpose();
    psi.row(j) = eval_components(c, p, Side::y, t(j)).transpose();
  }
  CHECK((bg - psi * p.A.topLeftCorner(2, 2) * phi.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(k.beta(s(3), t(7)) == doctest::Approx(bg(7, 3)).epsilon(1e-12));

  const QuadratureRule rule = composite_gauss_legendre(0.0, 1.0, 35, 6);
  double b2 = 0.0;
  for (std::size_t a = 0; a < rule.nodes.size(); ++a)
    for (std::size_t b = 0; b < rule.nodes.size(); ++b)
      b2 += rule.weights[a] * rule.weights[b] * std::pow(k.beta(rule.nodes[a], rule.nodes[b]), 2);
  CHECK(b2 == doctest::Approx(p.A.topLeftCorner(2, 2).squaredNorm()).epsilon(1e-9));

  p.A.setZero();
  const RegressionKernels z(c, p);
  CHECK(z.beta(0.3, 0.6) == 0.0);
  CHECK(z.gamma1(0.6).cwiseAbs().maxCoeff() == 0.0);
  CHECK(z.gamma2(0.3).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("constraint enforcement") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const ModelConfig c = oracle::random_config(1 + trial % 3, 1 + trial % 2 + trial % 3 / 2, trial % 2, trial % 3 == 0 ? 0 : 1);
    const ModelParams raw = oracle::random_params(c, rng);
    const ModelParams p = enforce_constraints(c, raw);
    const ConstraintReport r = check_constraints(c, p);
    CHECK(r.c_orthonormality < 1e-10);
    CHECK(r.d_orthonormality < 1e-10);
    CHECK(r.gamma_offdiag_rel < 1e-12);
    CHECK(r.lambda_offdiag == 0.0);
    CHECK(r.lambda_nonincreasing);
    const ModelParams again = enforce_constraints(c, p);
    CHECK((again.C - p.C).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((again.D - p.D).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((again.A - p.A).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((again.sigma_w - p.sigma_w).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("constraint enforcement leaves the marginal likelihood unchanged") {
  std::mt19937_64 rng(33);
  SUBCASE("exact Gaussian likelihood, no warping") {
    for (int trial = 0; trial < 5; ++trial) {
      const ModelConfig c = oracle::random_config(2, 2, 0, 0);
      // orthonormal components in rotated coordinates; isotropic Sigma_e stays diagonal
      ModelParams base = enforce_constraints(c, oracle::random_params(c, rng));
      base.sigma_e.setConstant(0.07);
      const MatrixXd qu = Eigen::HouseholderQR<MatrixXd>(MatrixXd::Random(2, 2)).householderQ();
      const MatrixXd qv = Eigen::HouseholderQR<MatrixXd>(MatrixXd::Random(2, 2)).householderQ();
      const ModelParams raw =
          transform_amplitudes(c, base, MatrixXd(base.sigma_e.asDiagonal()), qu, qv).params;
      CHECK(check_constraints(c, raw).lambda_offdiag > 1e-6);
      const CurveDataset data = oracle::draw_dataset(c, raw, 6, rng);
      const ModelParams p = enforce_constraints(c, raw);
      CHECK(exact_loglik(c, p, data) == doctest::Approx(exact_loglik(c, raw, data)).epsilon(1e-8));
    }
  }
  SUBCASE("Laplace likelihood with warping, p2 = 1") {
    for (int trial = 0; trial < 3; ++trial) {
      const ModelConfig c = oracle::random_config(2, 1, 1, 1);
      ModelParams raw = oracle::random_params(c, rng);
      raw.sigma2_eps = raw.sigma2_eta = 0.01;
      const CurveDataset data = oracle::draw_dataset(c, raw, 5, rng, 15, 20);
      const ModelParams p = enforce_constraints(c, raw);
      const double before = e_step_serial(c, raw, data, {}).loglik;
      const double after = e_step_serial(c, p, data, {}).loglik;
      CHECK(after == doctest::Approx(before).epsilon(1e-8));
    }
  }
}

TEST_CASE("Gamma diagonalization") {
  const ModelConfig c = oracle::random_config(2, 3, 0, 1);
  std::mt19937_64 rng(41);
  ModelParams raw = oracle::random_params(c, rng);
  const MatrixXd g0 = raw.gamma(3);
  CHECK(std::abs(g0(0, 1)) > 1e-3);
  const ModelParams p = enforce_constraints(c, raw);
  const MatrixXd g = p.gamma(3);
  const MatrixXd off = g - MatrixXd(g.diagonal().asDiagonal());
  CHECK(off.cwiseAbs().maxCoeff() <= 1e-12 * g.trace());
  CHECK(p.sigma_w.rows() == c.d1());
}
