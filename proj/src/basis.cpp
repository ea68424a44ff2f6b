#include "wfr/basis.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "wfr/errors.hpp"
#include "wfr/linalg.hpp"
#include "wfr/quadrature.hpp"

namespace wfr {

namespace {
constexpr int kMaxDegree = 10;
}

SplineBasis::SplineBasis(double a, double b, std::vector<double> interior_knots, int degree)
    : a_(a), b_(b), degree_(degree), interior_(std::move(interior_knots)) {
  if (!(b_ > a_) || !std::isfinite(a_) || !std::isfinite(b_)) {
    throw DomainError("SplineBasis: domain must be a nonempty finite interval");
  }
  if (degree_ < 0 || degree_ > kMaxDegree) throw DomainError("SplineBasis: unsupported degree");
  for (std::size_t i = 0; i < interior_.size(); ++i) {
    if (!(interior_[i] > a_ && interior_[i] < b_)) {
      throw DomainError("SplineBasis: interior knots must lie strictly inside (a, b)");
    }
    if (i > 0 && !(interior_[i] > interior_[i - 1])) {
      throw DomainError("SplineBasis: interior knots must be strictly increasing");
    }
  }
  knots_.assign(degree_ + 1, a_);
  knots_.insert(knots_.end(), interior_.begin(), interior_.end());
  knots_.insert(knots_.end(), degree_ + 1, b_);
}

SplineBasis SplineBasis::uniform(double a, double b, int n_interior, int degree) {
  std::vector<double> k(n_interior);
  for (int i = 0; i < n_interior; ++i) k[i] = a + (b - a) * (i + 1) / (n_interior + 1.0);
  return SplineBasis(a, b, std::move(k), degree);
}

int SplineBasis::find_span(double s) const {
  // Last knot span with nonzero length; right endpoint belongs to it.
  const int n = dim();
  if (s >= knots_[n]) return n - 1;
  if (s <= knots_[degree_]) return degree_;
  auto it = std::upper_bound(knots_.begin() + degree_, knots_.begin() + n + 1, s);
  return static_cast<int>(it - knots_.begin()) - 1;
}

int SplineBasis::eval_local(double s, std::span<double> values, std::span<double> derivs) const {
  const int p = degree_;
  const int span = find_span(s);
  std::array<double, kMaxDegree + 2> left{}, right{};
  // ndu rows: basis values of increasing degree (Piegl & Tiller, A2.2).
  std::array<std::array<double, kMaxDegree + 1>, kMaxDegree + 1> n{};
  n[0][0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = s - knots_[span + 1 - j];
    right[j] = knots_[span + j] - s;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[r + 1] + left[j - r];
      const double temp = denom != 0.0 ? n[j - 1][r] / denom : 0.0;
      n[j][r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    n[j][j] = saved;
  }
  for (int r = 0; r <= p; ++r) values[r] = n[p][r];
  if (!derivs.empty()) {
    if (p == 0) {
      derivs[0] = 0.0;
    } else {
      // b'_{i,p} = p [ b_{i,p-1} / (t_{i+p} - t_i) - b_{i+1,p-1} / (t_{i+p+1} - t_{i+1}) ]
      const int first = span - p;
      for (int r = 0; r <= p; ++r) {
        const int i = first + r;
        double d = 0.0;
        if (r >= 1) {
          const double den = knots_[i + p] - knots_[i];
          if (den > 0.0) d += n[p - 1][r - 1] / den;
        }
        if (r <= p - 1) {
          const double den = knots_[i + p + 1] - knots_[i + 1];
          if (den > 0.0) d -= n[p - 1][r] / den;
        }
        derivs[r] = p * d;
      }
    }
  }
  return span - p;
}

Eigen::VectorXd SplineBasis::eval(double s) const {
  if (!contains(s)) throw DomainError("SplineBasis::eval: point outside the basis domain");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dim());
  std::array<double, kMaxDegree + 1> v{};
  const int first = eval_local(s, std::span<double>(v.data(), degree_ + 1));
  for (int r = 0; r <= degree_; ++r) out(first + r) = v[r];
  return out;
}

Eigen::VectorXd SplineBasis::eval_deriv(double s) const {
  if (!contains(s)) throw DomainError("SplineBasis::eval_deriv: point outside the basis domain");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dim());
  std::array<double, kMaxDegree + 1> v{}, d{};
  const int first = eval_local(s, std::span<double>(v.data(), degree_ + 1),
                               std::span<double>(d.data(), degree_ + 1));
  for (int r = 0; r <= degree_; ++r) out(first + r) = d[r];
  return out;
}

Eigen::MatrixXd SplineBasis::design(std::span<const double> points) const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(points.size()), dim());
  std::array<double, kMaxDegree + 1> v{};
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (!contains(points[j])) throw DomainError("SplineBasis::design: point outside the basis domain");
    const int first = eval_local(points[j], std::span<double>(v.data(), degree_ + 1));
    for (int r = 0; r <= degree_; ++r) out(static_cast<Eigen::Index>(j), first + r) = v[r];
  }
  return out;
}

double SplineBasis::eval_spline(const Eigen::VectorXd& coef, double s) const {
  if (!contains(s)) throw DomainError("SplineBasis::eval_spline: point outside the basis domain");
  std::array<double, kMaxDegree + 1> v{};
  const int first = eval_local(s, std::span<double>(v.data(), degree_ + 1));
  double acc = 0.0;
  for (int r = 0; r <= degree_; ++r) acc += v[r] * coef(first + r);
  return acc;
}

Eigen::MatrixXd gram(const SplineBasis& basis) {
  const int q = basis.dim();
  const int p = basis.degree();
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(q, q);
  const QuadratureRule rule = gauss_legendre(p + 2);
  std::vector<double> breaks{basis.lower()};
  for (double k : basis.interior_knots()) breaks.push_back(k);
  breaks.push_back(basis.upper());
  std::array<double, kMaxDegree + 1> v{};
  for (std::size_t seg = 0; seg + 1 < breaks.size(); ++seg) {
    const double lo = breaks[seg], hi = breaks[seg + 1];
    const double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
      const double s = mid + half * rule.nodes[k];
      const double w = half * rule.weights[k];
      const int first = basis.eval_local(s, std::span<double>(v.data(), p + 1));
      for (int r = 0; r <= p; ++r)
        for (int c = 0; c <= p; ++c) J(first + r, first + c) += w * v[r] * v[c];
    }
  }
  return linalg::symmetrize(J);
}

Eigen::VectorXd dominant_signs(const Eigen::MatrixXd& coef) {
  Eigen::VectorXd sign = Eigen::VectorXd::Ones(coef.cols());
  for (Eigen::Index k = 0; k < coef.cols(); ++k) {
    Eigen::Index imax = 0;
    coef.col(k).cwiseAbs().maxCoeff(&imax);
    if (coef(imax, k) < 0.0) sign(k) = -1.0;
  }
  return sign;
}

Eigen::MatrixXd orthonormalizing_transform(const Eigen::MatrixXd& coef, const Eigen::MatrixXd& J) {
  if (coef.cols() == 0) return Eigen::MatrixXd(0, 0);
  const Eigen::MatrixXd g = coef.transpose() * J * coef;
  Eigen::MatrixXd r;
  try {
    r = linalg::inverse_sqrt(g, 1e-12);
  } catch (const DegeneracyError&) {
    throw DegeneracyError("orthonormalize: coefficient matrix is rank deficient");
  }
  const Eigen::VectorXd sign = dominant_signs(coef * r);
  return r * sign.asDiagonal();
}

Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& coef, const Eigen::MatrixXd& J) {
  return coef * orthonormalizing_transform(coef, J);
}

}  // namespace wfr
