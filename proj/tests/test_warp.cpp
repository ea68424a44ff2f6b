#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "wfr/errors.hpp"
#include "wfr/warp.hpp"

using namespace wfr;
using Eigen::VectorXd;

namespace {

WarpSpec random_spec(std::mt19937_64& rng, int r) {
  const double a = oracle::unif(rng, -2.0, 1.0);
  const double b = a + oracle::unif(rng, 0.5, 20.0);
  std::vector<double> k(r);
  for (int j = 0; j < r; ++j) k[j] = a + (b - a) * (j + 1 + oracle::unif(rng, -0.3, 0.3)) / (r + 1);
  return WarpSpec(a, b, k);
}

double min_grid_slope(const Warp& w, int n) {
  const double a = w.spec().lower(), b = w.spec().upper();
  double prev = w.eval(a), worst = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= n; ++k) {
    const double cur = w.eval(k == n ? b : a + (b - a) * k / n);
    worst = std::min(worst, cur - prev);
    prev = cur;
  }
  return worst;
}

}  // namespace

TEST_CASE("hermite shape functions") {
  CHECK(hermite_h(0.0).h00 == 1.0);
  CHECK(hermite_h(0.0).h10 == 0.0);
  CHECK(hermite_h(1.0).h00 == 0.0);
  CHECK(hermite_h(1.0).h10 == 0.0);
  CHECK(hermite_h(0.5).h00 == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(hermite_h(0.5).h10 == doctest::Approx(0.125).epsilon(1e-15));
}

TEST_CASE("hermite basis cardinality") {
  const WarpSpec spec(0.0, 1.0, {0.2, 0.5, 0.7});
  const auto& x = spec.extended_knots();
  for (int j = 0; j <= 4; ++j) {
    for (int k = 0; k <= 4; ++k) {
      const auto [alpha, beta] = hermite_basis(spec, j, x[k]);
      CHECK(alpha == doctest::Approx(j == k ? 1.0 : 0.0));
      CHECK(beta == doctest::Approx(0.0));
    }
  }
  const WarpSpec one(0.0, 1.0, {0.5});
  CHECK(hermite_basis(one, 1, 0.25).first == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("Fritsch-Carlson slopes") {
  const WarpSpec spec(0.0, 1.0, {0.25, 0.6});
  const VectorXd ident = Eigen::Map<const VectorXd>(spec.knots().data(), 2);
  const VectorXd d = fc_slopes(spec, ident);
  CHECK((d.array() - 1.0).abs().maxCoeff() < 1e-14);

  const WarpSpec one(0.0, 1.0, {0.5});
  const VectorXd tau = (VectorXd(1) << 0.9).finished();
  const VectorXd s = fc_slopes(one, tau);
  CHECK(s.minCoeff() >= 0.0);
  const double secant[2] = {0.9 / 0.5, 0.1 / 0.5};
  for (int k = 0; k < 2; ++k) {
    const double a = s(k) / secant[k], b = s(k + 1) / secant[k];
    CHECK(a * a + b * b <= 9.0 + 1e-12);
  }
  CHECK(min_grid_slope(Warp::from_values(one, tau), 10000) > 0.0);
  CHECK_THROWS_AS(fc_slopes(one, (VectorXd(1) << 1.2).finished()), DomainError);
}

TEST_CASE("Jupp transform") {
  const WarpSpec two(0.0, 1.0, {0.25, 0.5});
  const VectorXd th = jupp(two, (VectorXd(2) << 0.25, 0.5).finished());
  CHECK(th(0) == doctest::Approx(0.0));
  CHECK(th(1) == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  const VectorXd even = jupp(two, (VectorXd(2) << 1.0 / 3, 2.0 / 3).finished());
  CHECK(even.cwiseAbs().maxCoeff() < 1e-14);
  const VectorXd t2 = jupp_inv(two, VectorXd::Zero(2));
  CHECK(t2(0) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(t2(1) == doctest::Approx(2.0 / 3).epsilon(1e-15));
  const WarpSpec one(0.0, 1.0, {0.3});
  CHECK(jupp_inv(one, VectorXd::Zero(1))(0) == doctest::Approx(0.5).epsilon(1e-15));

  // A large first coordinate squeezes the first interval: tau_1 -> a+.
  const VectorXd big = jupp_inv(two, (VectorXd(2) << 20.0, 0.0).finished());
  CHECK(big(0) > 0.0);
  CHECK(big(0) < 1e-8);
  CHECK(big(1) > big(0));
  CHECK(big(1) < 1.0);

  CHECK_THROWS_AS(jupp(two, (VectorXd(2) << 0.5, 0.5).finished()), DomainError);
  CHECK_THROWS_AS(jupp_inv(two, (VectorXd(2) << std::nan(""), 0.0).finished()), DomainError);

  std::mt19937_64 rng(17);
  for (int k = 0; k < 200; ++k) {
    const WarpSpec s = random_spec(rng, 1 + k % 4);
    const VectorXd theta = 2.0 * oracle::randn(rng, s.r());
    const VectorXd tau = jupp_inv(s, theta);
    CHECK((jupp(s, tau) - theta).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((jupp_inv(s, jupp(s, tau)) - tau).cwiseAbs().maxCoeff() < 1e-12 * (s.upper() - s.lower()));
    const VectorXd ref = Eigen::Map<const VectorXd>(s.knots().data(), s.r());
    CHECK((jupp_inv(s, s.reference_theta()) - ref).cwiseAbs().maxCoeff() < 1e-12 * (s.upper() - s.lower()));
  }
}

TEST_CASE("Jupp inverse Jacobian matches finite differences") {
  std::mt19937_64 rng(23);
  for (int k = 0; k < 30; ++k) {
    const WarpSpec s = random_spec(rng, 1 + k % 3);
    const VectorXd theta = oracle::randn(rng, s.r());
    const Eigen::MatrixXd jac = jupp_inv_jacobian(s, theta);
    for (int i = 0; i < s.r(); ++i) {
      const VectorXd fd = oracle::fd_gradient([&](const VectorXd& th) { return jupp_inv(s, th)(i); }, theta, 1e-4);
      CHECK((jac.row(i).transpose() - fd).cwiseAbs().maxCoeff() < 1e-8 * (s.upper() - s.lower()));
    }
  }
}

TEST_CASE("warp evaluation, inversion and derivatives") {
  const WarpSpec one(0.0, 1.0, {0.5});
  const Warp id = Warp::identity(one);
  for (double s : {0.0, 0.1, 0.37, 0.5, 0.9, 1.0}) {
    CHECK(id.eval(s) == doctest::Approx(s).epsilon(1e-15));
    CHECK(id.invert(s) == doctest::Approx(s).epsilon(1e-15));
  }
  const Warp w = Warp::from_values(one, (VectorXd(1) << 0.3).finished());
  CHECK(w.eval(0.5) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(w.invert(0.3) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(w.eval(1.1), DomainError);

  std::mt19937_64 rng(29);
  for (int k = 0; k < 100; ++k) {
    const WarpSpec s = random_spec(rng, 1 + k % 4);
    const Warp v = Warp::from_jupp(s, 1.5 * oracle::randn(rng, s.r()));
    const double a = s.lower(), b = s.upper();
    CHECK(v.eval(a) == a);
    CHECK(v.eval(b) == b);
    const auto& x = s.extended_knots();
    for (int j = 0; j < s.r() + 2; ++j) {
      const double h = 1e-7 * (b - a);
      const double lo = std::max(a, x[j] - h), hi = std::min(b, x[j] + h);
      const double fd = (v.eval(hi) - v.eval(lo)) / (hi - lo);
      CHECK(fd == doctest::Approx(v.slopes()(j)).epsilon(1e-5).scale(1.0));
      CHECK(v.derivative(x[j]) == doctest::Approx(v.slopes()(j)).epsilon(1e-12));
    }
    for (int i = 0; i < 50; ++i) {
      const double s0 = oracle::unif(rng, a, b);
      CHECK(std::abs(v.invert(v.eval(s0)) - s0) <= 1e-8 * (b - a));
    }
  }
}

TEST_CASE("inverse warp grid and its Jacobian") {
  std::mt19937_64 rng(31);
  for (int k = 0; k < 40; ++k) {
    const WarpSpec s = random_spec(rng, 1 + k % 3);
    const VectorXd theta = s.reference_theta() + 0.5 * oracle::randn(rng, s.r());
    std::vector<double> grid;
    for (int j = 0; j < 12; ++j) grid.push_back(s.lower() + (s.upper() - s.lower()) * oracle::unif(rng, 0.0, 1.0));
    const WarpedGrid g = inverse_warp_grid(s, theta, grid, true);
    const Warp w = Warp::from_jupp(s, theta);
    for (int j = 0; j < 12; ++j) CHECK(w.eval(g.points(j)) == doctest::Approx(grid[j]).epsilon(1e-12).scale(s.upper()));
    for (int j = 0; j < 12; ++j) {
      const VectorXd fd = oracle::fd_gradient(
          [&](const VectorXd& th) { return inverse_warp_grid(s, th, std::span<const double>(&grid[j], 1), false).points(0); },
          theta, 1e-5);
      CHECK((g.jacobian.row(j).transpose() - fd).cwiseAbs().maxCoeff() < 1e-6 * (s.upper() - s.lower()));
    }
  }
  const WarpSpec none(0.0, 1.0, {});
  std::vector<double> grid{0.1, 0.2};
  const WarpedGrid g = inverse_warp_grid(none, VectorXd(0), grid, true);
  CHECK(g.points(1) == 0.2);
  CHECK(g.jacobian.cols() == 0);
}

TEST_CASE("randomized monotonicity and endpoint property") {
  std::mt19937_64 rng(37);
  for (int k = 0; k < 500; ++k) {
    const WarpSpec s = random_spec(rng, 1 + k % 5);
    const Warp w = Warp::from_jupp(s, 2.0 * oracle::randn(rng, s.r()));
    REQUIRE(min_grid_slope(w, 2000) > 0.0);
    REQUIRE(w.eval(s.lower()) == s.lower());
    REQUIRE(w.eval(s.upper()) == s.upper());
  }
}
