#include "wfr/linalg.hpp"

#include <cmath>

#include "wfr/errors.hpp"

namespace wfr::linalg {

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

Eigen::MatrixXd inverse_sqrt(const Eigen::MatrixXd& s, double rel_tol) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetrize(s));
  const Eigen::VectorXd& ev = eig.eigenvalues();
  if (ev.size() == 0) return Eigen::MatrixXd(0, 0);
  const double top = ev.maxCoeff();
  if (!(top > 0.0) || ev.minCoeff() <= rel_tol * top) {
    throw DegeneracyError("inverse_sqrt: matrix is not positive definite (rank deficient)");
  }
  Eigen::VectorXd inv = ev.array().rsqrt();
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetrize(s));
  Eigen::VectorXd r = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * r.asDiagonal() * eig.eigenvectors().transpose();
}

Eigen::MatrixXd floor_eigenvalues(const Eigen::MatrixXd& s, double floor_rel) {
  const Eigen::Index n = s.rows();
  if (n == 0) return s;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetrize(s));
  const double scale = std::max(s.trace() / static_cast<double>(n), 0.0);
  const double floor = floor_rel * (scale > 0.0 ? scale : 1.0);
  if (eig.eigenvalues().minCoeff() >= floor) return symmetrize(s);
  Eigen::VectorXd ev = eig.eigenvalues().cwiseMax(floor);
  return symmetrize(eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose());
}

double logdet_spd(const Eigen::MatrixXd& s) {
  if (s.rows() == 0) return 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) {
    throw DegeneracyError("logdet_spd: matrix is not positive definite");
  }
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

Eigen::MatrixXd inverse_spd(const Eigen::MatrixXd& s) {
  if (s.rows() == 0) return s;
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) {
    throw DegeneracyError("inverse_spd: matrix is not positive definite");
  }
  return symmetrize(llt.solve(Eigen::MatrixXd::Identity(s.rows(), s.cols())));
}

double jittered_llt(const Eigen::MatrixXd& s, Eigen::LLT<Eigen::MatrixXd>& llt, double jitter_rel) {
  llt.compute(s);
  if (llt.info() == Eigen::Success) return 0.0;
  const double n = static_cast<double>(std::max<Eigen::Index>(s.rows(), 1));
  double scale = std::abs(s.trace()) / n;
  if (!(scale > 0.0)) scale = 1.0;
  double jitter = jitter_rel * scale;
  for (int attempt = 0; attempt < 20; ++attempt) {
    Eigen::MatrixXd t = s;
    t.diagonal().array() += jitter;
    llt.compute(t);
    if (llt.info() == Eigen::Success) return jitter;
    jitter *= 10.0;
  }
  throw DegeneracyError("jittered_llt: matrix could not be made positive definite");
}

Eigen::VectorXd vec_rows(const Eigen::MatrixXd& m) {
  Eigen::VectorXd out(m.size());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out(k++) = m(i, j);
  return out;
}

Eigen::VectorXd vec(const Eigen::MatrixXd& m) {
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

Eigen::VectorXd vech(const Eigen::MatrixXd& s) {
  const Eigen::Index n = s.rows();
  Eigen::VectorXd out(n * (n + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j; i < n; ++i) out(k++) = s(i, j);
  return out;
}

Eigen::MatrixXd unvech(const Eigen::VectorXd& v, int dim) {
  if (v.size() != static_cast<Eigen::Index>(dim) * (dim + 1) / 2) {
    throw DomainError("unvech: length does not match dimension");
  }
  Eigen::MatrixXd s(dim, dim);
  Eigen::Index k = 0;
  for (int j = 0; j < dim; ++j)
    for (int i = j; i < dim; ++i) {
      s(i, j) = v(k);
      s(j, i) = v(k);
      ++k;
    }
  return s;
}

}  // namespace wfr::linalg
