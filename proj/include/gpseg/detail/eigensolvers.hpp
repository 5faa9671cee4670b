#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "gpseg/error.hpp"

namespace gpseg::detail {

using SpMat = Eigen::SparseMatrix<double>;

/// Problems at or below this size are diagonalized densely.
inline constexpr Eigen::Index kDenseEigenLimit = 1024;

struct EigenDecomposition {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // Euclidean-orthonormal columns
};

inline SpMat sparse_identity(Eigen::Index n) {
  SpMat id(n, n);
  id.setIdentity();
  return id;
}

inline EigenDecomposition lowest_eigenpairs_dense(const Eigen::MatrixXd& a, Eigen::Index k) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  if (es.info() != Eigen::Success) throw SolverError("dense symmetric eigen-solve failed");
  return {es.eigenvalues().head(k), es.eigenvectors().leftCols(k)};
}

/// Lower bound on the spectrum of a symmetric matrix.
inline double gershgorin_lower(const SpMat& a) {
  double lo = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < a.outerSize(); ++c) {
    double diag = 0.0, off = 0.0;
    for (SpMat::InnerIterator it(a, c); it; ++it) {
      if (it.row() == it.col())
        diag = it.value();
      else
        off += std::abs(it.value());
    }
    lo = std::min(lo, diag - off);
  }
  return lo;
}

/// Upper bound on the spectral radius of a symmetric matrix.
inline double gershgorin_radius(const SpMat& a) {
  double r = 0.0;
  for (Eigen::Index c = 0; c < a.outerSize(); ++c) {
    double s = 0.0;
    for (SpMat::InnerIterator it(a, c); it; ++it) s += std::abs(it.value());
    r = std::max(r, s);
  }
  return r;
}

/// Number of eigenvalues of the symmetric matrix `a` strictly below `x`,
/// read off the pivots of an LDL^T factorization of a - x I (Sylvester).
inline Eigen::Index count_eigenvalues_below(const SpMat& a, double x) {
  SpMat shifted = a - x * sparse_identity(a.rows());
  Eigen::SimplicialLDLT<SpMat> ldlt(shifted);
  if (ldlt.info() != Eigen::Success) throw SolverError("LDL^T factorization failed in inertia count");
  const Eigen::VectorXd d = ldlt.vectorD();
  if (!d.allFinite()) throw SolverError("LDL^T factorization produced non-finite pivots");
  return (d.array() < 0.0).count();
}

namespace internal {

inline Eigen::MatrixXd start_block(Eigen::Index n, Eigen::Index p) {
  // Fixed quasi-random start (Weyl sequence) so repeated runs agree bit for bit.
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = (i + 1) * 0.6180339887498949 + (j + 1) * 0.4142135623730950;
      x(i, j) = t - std::floor(t) - 0.5;
    }
  return x;
}

inline Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& x) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
  return qr.householderQ() * Eigen::MatrixXd::Identity(x.rows(), x.cols());
}

}  // namespace internal

/// Smallest `k` eigenpairs of a sparse symmetric matrix by shift-invert block
/// subspace iteration with Rayleigh-Ritz. `shift` must lie strictly below the
/// spectrum. Block iteration keeps multiple eigenvalues (square domains) intact.
inline EigenDecomposition lowest_eigenpairs_sparse(const SpMat& a, Eigen::Index k, double shift,
                                                   double tol = 1e-10, int max_iter = 2000) {
  const Eigen::Index n = a.rows();
  const Eigen::Index p = std::min<Eigen::Index>(n, k + std::max<Eigen::Index>(8, k / 2));

  SpMat shifted = a - shift * sparse_identity(n);
  Eigen::SimplicialLDLT<SpMat> fac(shifted);
  if (fac.info() != Eigen::Success) throw SolverError("shift-invert factorization failed");

  Eigen::MatrixXd x = internal::orthonormalize(internal::start_block(n, p));
  for (int it = 1; it <= max_iter; ++it) {
    x = internal::orthonormalize(fac.solve(x));
    const Eigen::MatrixXd ax = a * x;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> rr(x.transpose() * ax);
    x = x * rr.eigenvectors();
    const Eigen::MatrixXd r = ax * rr.eigenvectors() - x * rr.eigenvalues().asDiagonal();

    bool converged = true;
    for (Eigen::Index j = 0; j < k && converged; ++j)
      converged = r.col(j).norm() <= tol * std::max(1.0, std::abs(rr.eigenvalues()(j)));
    if (converged) return {rr.eigenvalues().head(k), x.leftCols(k)};
  }
  throw SolverError("shift-invert subspace iteration did not converge", max_iter);
}

/// Bracket the smallest eigenvalue from below with inertia counts and return
/// a shift that keeps a - shift I positive definite but close to singular.
inline double shift_below_spectrum(const SpMat& a) {
  double lo = gershgorin_lower(a) - 1.0;
  double hi = lo + 2.0 * gershgorin_radius(a) + 2.0;
  for (int i = 0; i < 60 && hi - lo > 1e-3 * (1.0 + std::abs(lo)); ++i) {
    const double mid = 0.5 * (lo + hi);
    if (count_eigenvalues_below(a, mid) == 0)
      lo = mid;
    else
      hi = mid;
  }
  return lo - 1e-3 * (1.0 + std::abs(lo));
}

}  // namespace gpseg::detail
