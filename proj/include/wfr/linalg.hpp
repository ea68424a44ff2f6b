#pragma once

#include <Eigen/Dense>

namespace wfr::linalg {

/// Symmetric part (M + M^T) / 2.
Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m);

/// S^{-1/2} for symmetric positive definite S. Throws DegeneracyError when
/// the smallest eigenvalue is below rel_tol times the largest.
Eigen::MatrixXd inverse_sqrt(const Eigen::MatrixXd& s, double rel_tol = 1e-12);

/// S^{1/2} for symmetric positive semidefinite S (negative eigenvalues clipped).
Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& s);

/// Eigenvalues of a symmetric matrix floored at floor_rel * trace / dim.
Eigen::MatrixXd floor_eigenvalues(const Eigen::MatrixXd& s, double floor_rel);

/// log det of a symmetric positive definite matrix via LLT. Throws
/// DegeneracyError if the factorization fails.
double logdet_spd(const Eigen::MatrixXd& s);

/// Inverse of a symmetric positive definite matrix via LLT.
Eigen::MatrixXd inverse_spd(const Eigen::MatrixXd& s);

/// Attempts LLT; on failure adds jitter * (trace/dim) to the diagonal and
/// retries with growing jitter. Returns the jitter finally used.
double jittered_llt(const Eigen::MatrixXd& s, Eigen::LLT<Eigen::MatrixXd>& llt,
                    double jitter_rel = 1e-8);

/// Row-major flattening of a matrix (used by the model file).
Eigen::VectorXd vec_rows(const Eigen::MatrixXd& m);

/// Column-stacked vec.
Eigen::VectorXd vec(const Eigen::MatrixXd& m);

/// Lower-triangle-including-diagonal stacking, column by column.
Eigen::VectorXd vech(const Eigen::MatrixXd& s);

/// Inverse of vech for symmetric matrices.
Eigen::MatrixXd unvech(const Eigen::VectorXd& v, int dim);

}  // namespace wfr::linalg
