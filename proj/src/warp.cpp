#include "wfr/warp.hpp"

#include <algorithm>
#include <cmath>

#include "wfr/errors.hpp"

namespace wfr {

namespace {

constexpr double kRadius = 3.0;

// Cubic Hermite shape functions on [0, 1] and their derivatives.
inline double h00(double t) { return (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t); }
inline double h10(double t) { return t * (1.0 - t) * (1.0 - t); }
inline double h01(double t) { return t * t * (3.0 - 2.0 * t); }
inline double h11(double t) { return t * t * (t - 1.0); }
inline double dh00(double t) { return 6.0 * t * (t - 1.0); }
inline double dh10(double t) { return (1.0 - t) * (1.0 - 3.0 * t); }
inline double dh01(double t) { return 6.0 * t * (1.0 - t); }
inline double dh11(double t) { return t * (3.0 * t - 2.0); }

void check_increasing(const WarpSpec& spec, const Eigen::VectorXd& tau, const char* who) {
  if (tau.size() != spec.r()) throw DomainError(std::string(who) + ": length must equal r");
  double prev = spec.lower();
  for (Eigen::Index j = 0; j < tau.size(); ++j) {
    if (!std::isfinite(tau(j)) || !(tau(j) > prev)) {
      throw DomainError(std::string(who) + ": values must be strictly increasing inside (a, b)");
    }
    prev = tau(j);
  }
  if (!(spec.upper() > prev)) {
    throw DomainError(std::string(who) + ": values must be strictly increasing inside (a, b)");
  }
}

}  // namespace

WarpSpec::WarpSpec(double a, double b, std::vector<double> knots)
    : a_(a), b_(b), knots_(std::move(knots)) {
  if (!(b_ > a_) || !std::isfinite(a_) || !std::isfinite(b_)) {
    throw DomainError("WarpSpec: domain must be a nonempty finite interval");
  }
  double prev = a_;
  for (double k : knots_) {
    if (!(k > prev)) throw DomainError("WarpSpec: knots must be strictly increasing inside (a, b)");
    prev = k;
  }
  if (!(b_ > prev)) throw DomainError("WarpSpec: knots must be strictly increasing inside (a, b)");
  extended_.reserve(knots_.size() + 2);
  extended_.push_back(a_);
  extended_.insert(extended_.end(), knots_.begin(), knots_.end());
  extended_.push_back(b_);
}

Eigen::VectorXd WarpSpec::reference_theta() const {
  return jupp(*this, Eigen::Map<const Eigen::VectorXd>(knots_.data(), r()));
}

HermiteShape hermite_h(double s) { return {h00(s), h10(s)}; }

std::pair<double, double> hermite_basis(const WarpSpec& spec, int j, double s) {
  const auto& x = spec.extended_knots();
  const int last = spec.r() + 1;
  if (j < 0 || j > last) throw DomainError("hermite_basis: index out of range");
  if (s < spec.lower() || s > spec.upper()) throw DomainError("hermite_basis: point outside [a, b]");
  // Left branch: s in [x_{j-1}, x_j]; right branch: s in [x_j, x_{j+1}].
  if (j > 0 && s >= x[j - 1] && s <= x[j]) {
    const double h = x[j] - x[j - 1];
    const double u = (x[j] - s) / h;
    return {h00(u), -h * h10(u)};
  }
  if (j < last && s >= x[j] && s <= x[j + 1]) {
    const double h = x[j + 1] - x[j];
    const double u = (s - x[j]) / h;
    return {h00(u), h * h10(u)};
  }
  return {0.0, 0.0};
}

SlopesWithJacobian fc_slopes_with_jacobian(const WarpSpec& spec, const Eigen::VectorXd& tau) {
  check_increasing(spec, tau, "fc_slopes");
  const int r = spec.r();
  const auto& x = spec.extended_knots();
  const int n = r + 2;
  Eigen::VectorXd y(n);
  y(0) = spec.lower();
  y.segment(1, r) = tau;
  y(n - 1) = spec.upper();
  // dy/dtau: rows 1..r are the identity.
  auto dy = [&](int k) {
    Eigen::RowVectorXd g = Eigen::RowVectorXd::Zero(r);
    if (k >= 1 && k <= r) g(k - 1) = 1.0;
    return g;
  };

  Eigen::VectorXd h(n - 1), delta(n - 1);
  Eigen::MatrixXd ddelta(n - 1, r);
  for (int j = 0; j < n - 1; ++j) {
    h(j) = x[j + 1] - x[j];
    delta(j) = (y(j + 1) - y(j)) / h(j);
    ddelta.row(j) = (dy(j + 1) - dy(j)) / h(j);
  }

  SlopesWithJacobian out;
  out.slopes.resize(n);
  out.jacobian.resize(n, r);
  Eigen::VectorXd& d = out.slopes;
  Eigen::MatrixXd& dd = out.jacobian;
  if (r == 0) {
    d(0) = d(1) = delta(0);
    dd.setZero();
    return out;
  }
  d(0) = delta(0);
  dd.row(0) = ddelta.row(0);
  d(n - 1) = delta(n - 2);
  dd.row(n - 1) = ddelta.row(n - 2);
  for (int j = 1; j < n - 1; ++j) {
    const double wl = h(j), wr = h(j - 1), den = h(j - 1) + h(j);
    d(j) = (wl * delta(j - 1) + wr * delta(j)) / den;
    dd.row(j) = (wl * ddelta.row(j - 1) + wr * ddelta.row(j)) / den;
  }
  for (int j = 0; j < n - 1; ++j) {
    const double a = d(j) / delta(j), b = d(j + 1) / delta(j);
    if (a * a + b * b <= kRadius * kRadius) continue;
    const double rho = std::hypot(d(j), d(j + 1));
    const double f = kRadius * delta(j) / rho;
    const Eigen::RowVectorXd drho = (d(j) * dd.row(j) + d(j + 1) * dd.row(j + 1)) / rho;
    const Eigen::RowVectorXd df = kRadius * ddelta.row(j) / rho - kRadius * delta(j) / (rho * rho) * drho;
    const Eigen::RowVectorXd gj = df * d(j) + f * dd.row(j);
    const Eigen::RowVectorXd gk = df * d(j + 1) + f * dd.row(j + 1);
    d(j) *= f;
    d(j + 1) *= f;
    dd.row(j) = gj;
    dd.row(j + 1) = gk;
  }
  return out;
}

Eigen::VectorXd fc_slopes(const WarpSpec& spec, const Eigen::VectorXd& tau) {
  return fc_slopes_with_jacobian(spec, tau).slopes;
}

Eigen::VectorXd jupp(const WarpSpec& spec, const Eigen::VectorXd& tau) {
  check_increasing(spec, tau, "jupp");
  const int r = spec.r();
  Eigen::VectorXd theta(r);
  for (int j = 0; j < r; ++j) {
    const double prev = j == 0 ? spec.lower() : tau(j - 1);
    const double next = j == r - 1 ? spec.upper() : tau(j + 1);
    theta(j) = std::log((next - tau(j)) / (tau(j) - prev));
  }
  return theta;
}

namespace {

// Normalized gap weights e_k = exp(c_k - max c), c_0 = 0, c_k = theta_1 + ... + theta_k.
Eigen::VectorXd gap_weights(const Eigen::VectorXd& theta) {
  const Eigen::Index r = theta.size();
  Eigen::VectorXd c(r + 1);
  c(0) = 0.0;
  for (Eigen::Index k = 0; k < r; ++k) c(k + 1) = c(k) + theta(k);
  return (c.array() - c.maxCoeff()).exp();
}

void check_finite(const Eigen::VectorXd& theta) {
  if (!theta.allFinite()) throw DomainError("jupp_inv: theta must be finite");
}

}  // namespace

Eigen::VectorXd jupp_inv(const WarpSpec& spec, const Eigen::VectorXd& theta) {
  if (theta.size() != spec.r()) throw DomainError("jupp_inv: length must equal r");
  check_finite(theta);
  const Eigen::Index r = theta.size();
  const Eigen::VectorXd e = gap_weights(theta);
  const double den = e.sum();
  const double a = spec.lower(), len = spec.upper() - spec.lower();
  Eigen::VectorXd tau(r);
  double partial = 0.0;
  for (Eigen::Index j = 0; j < r; ++j) {
    partial += e(j);
    tau(j) = a + len * partial / den;
  }
  return tau;
}

Eigen::MatrixXd jupp_inv_jacobian(const WarpSpec& spec, const Eigen::VectorXd& theta) {
  if (theta.size() != spec.r()) throw DomainError("jupp_inv_jacobian: length must equal r");
  check_finite(theta);
  const Eigen::Index r = theta.size();
  const Eigen::VectorXd e = gap_weights(theta);
  const double den = e.sum();
  const double len = spec.upper() - spec.lower();
  // tail(l) = sum_{k >= l} e_k; d den / d theta_l = tail(l), l = 1..r.
  Eigen::VectorXd tail(r + 2);
  tail(r + 1) = 0.0;
  for (Eigen::Index k = r; k >= 0; --k) tail(k) = tail(k + 1) + e(k);
  Eigen::MatrixXd jac(r, r);
  double partial = 0.0;  // P_j = sum_{k < j} e_k, j = 1..r
  for (Eigen::Index j = 1; j <= r; ++j) {
    partial += e(j - 1);
    for (Eigen::Index l = 1; l <= r; ++l) {
      // d P_j / d theta_l = sum_{l <= k < j} e_k
      const double dp = l < j ? tail(l) - tail(j) : 0.0;
      jac(j - 1, l - 1) = len * (dp * den - partial * tail(l)) / (den * den);
    }
  }
  return jac;
}

Warp::Warp(const WarpSpec& spec, Eigen::VectorXd tau, Eigen::VectorXd slopes)
    : spec_(spec), tau_(std::move(tau)), slopes_(std::move(slopes)) {
  if (tau_.size() != spec_.r() || slopes_.size() != spec_.r() + 2) {
    throw DomainError("Warp: inconsistent value/slope lengths");
  }
}

Warp Warp::identity(const WarpSpec& spec) {
  Eigen::VectorXd tau = Eigen::Map<const Eigen::VectorXd>(spec.knots().data(), spec.r());
  return Warp(spec, tau, Eigen::VectorXd::Ones(spec.r() + 2));
}

Warp Warp::from_values(const WarpSpec& spec, const Eigen::VectorXd& tau) {
  return Warp(spec, tau, fc_slopes(spec, tau));
}

Warp Warp::from_jupp(const WarpSpec& spec, const Eigen::VectorXd& theta) {
  return from_values(spec, jupp_inv(spec, theta));
}

double Warp::value_at(int k) const {
  if (k == 0) return spec_.lower();
  if (k == spec_.r() + 1) return spec_.upper();
  return tau_(k - 1);
}

int Warp::interval_of(double s) const {
  const auto& x = spec_.extended_knots();
  auto it = std::upper_bound(x.begin() + 1, x.end() - 1, s);
  return static_cast<int>(it - x.begin()) - 1;
}

double Warp::eval(double s) const {
  if (s < spec_.lower() || s > spec_.upper()) throw DomainError("Warp::eval: point outside [a, b]");
  const auto& x = spec_.extended_knots();
  const int j = interval_of(s);
  const double h = x[j + 1] - x[j];
  const double t = (s - x[j]) / h;
  return value_at(j) * h00(t) + value_at(j + 1) * h01(t) + h * (slopes_(j) * h10(t) + slopes_(j + 1) * h11(t));
}

double Warp::derivative(double s) const {
  if (s < spec_.lower() || s > spec_.upper()) throw DomainError("Warp::derivative: point outside [a, b]");
  const auto& x = spec_.extended_knots();
  const int j = interval_of(s);
  const double h = x[j + 1] - x[j];
  const double t = (s - x[j]) / h;
  return (value_at(j) * dh00(t) + value_at(j + 1) * dh01(t)) / h + slopes_(j) * dh10(t) +
         slopes_(j + 1) * dh11(t);
}

double Warp::invert(double target) const {
  const double a = spec_.lower(), b = spec_.upper();
  if (target < a || target > b) throw DomainError("Warp::invert: value outside [a, b]");
  if (target == a) return a;
  if (target == b) return b;
  const auto& x = spec_.extended_knots();
  // Interval whose value range contains the target.
  const int last = spec_.r() + 1;
  int j = 0;
  {
    int lo = 0, hi = last;  // find largest j with value_at(j) <= target
    while (hi - lo > 1) {
      const int mid = (lo + hi) / 2;
      if (value_at(mid) <= target) lo = mid; else hi = mid;
    }
    j = lo;
  }
  const double h = x[j + 1] - x[j];
  const double y0 = value_at(j), y1 = value_at(j + 1);
  const double m0 = h * slopes_(j), m1 = h * slopes_(j + 1);
  auto f = [&](double t) { return y0 * h00(t) + y1 * h01(t) + m0 * h10(t) + m1 * h11(t) - target; };
  auto df = [&](double t) { return y0 * dh00(t) + y1 * dh01(t) + m0 * dh10(t) + m1 * dh11(t); };
  double lo = 0.0, hi = 1.0;
  double t = (y1 > y0) ? (target - y0) / (y1 - y0) : 0.5;
  t = std::clamp(t, 0.0, 1.0);
  for (int it = 0; it < 100; ++it) {
    const double fv = f(t);
    if (fv == 0.0) break;
    if (fv < 0.0) lo = t; else hi = t;
    const double dv = df(t);
    double next = dv > 0.0 ? t - fv / dv : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - t) <= 1e-16 || hi - lo <= 1e-16) {
      t = next;
      break;
    }
    t = next;
  }
  return x[j] + h * t;
}

void Warp::partials(double s, Eigen::Ref<Eigen::VectorXd> d_values, Eigen::Ref<Eigen::VectorXd> d_slopes) const {
  const auto& x = spec_.extended_knots();
  const int j = interval_of(s);
  const double h = x[j + 1] - x[j];
  const double t = (s - x[j]) / h;
  d_values.setZero();
  d_slopes.setZero();
  d_values(j) = h00(t);
  d_values(j + 1) = h01(t);
  d_slopes(j) = h * h10(t);
  d_slopes(j + 1) = h * h11(t);
}

WarpedGrid inverse_warp_grid(const WarpSpec& spec, const Eigen::VectorXd& theta,
                             std::span<const double> grid, bool with_jacobian) {
  const int r = spec.r();
  const auto nu = static_cast<Eigen::Index>(grid.size());
  WarpedGrid out;
  out.points.resize(nu);
  if (r == 0) {
    for (Eigen::Index j = 0; j < nu; ++j) out.points(j) = grid[j];
    if (with_jacobian) out.jacobian.resize(nu, 0);
    return out;
  }
  const Eigen::VectorXd tau = jupp_inv(spec, theta);
  const SlopesWithJacobian sl = fc_slopes_with_jacobian(spec, tau);
  const Warp w(spec, tau, sl.slopes);
  for (Eigen::Index j = 0; j < nu; ++j) out.points(j) = w.invert(grid[j]);
  if (!with_jacobian) return out;

  const Eigen::MatrixXd dtau_dtheta = jupp_inv_jacobian(spec, theta);
  // d omega / d tau at s = d_values[1..r] + d_slopes . d slopes / d tau
  Eigen::VectorXd dv(r + 2), ds(r + 2);
  out.jacobian.resize(nu, r);
  for (Eigen::Index j = 0; j < nu; ++j) {
    const double sstar = out.points(j);
    w.partials(sstar, dv, ds);
    const Eigen::RowVectorXd domega_dtau = dv.segment(1, r).transpose() + ds.transpose() * sl.jacobian;
    const double slope = w.derivative(sstar);
    out.jacobian.row(j) = -(domega_dtau * dtau_dtheta) / slope;
  }
  return out;
}

}  // namespace wfr
