#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "rrcca/errors.hpp"

namespace rrcca {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kRankTol = 1e-10;
inline constexpr double kPsdTol = 1e-8;

/// Rank-r SVD factors, singular values nonincreasing, columns orthonormal.
struct SvdTriple {
  Matrix left;       // d1 x r
  Vector singulars;  // r, nonincreasing, >= 0
  Matrix right;      // d2 x r
};

namespace detail {

inline Matrix symmetrize(const Matrix& a) {
  return 0.5 * (a + a.transpose());
}

inline Matrix center_columns(const Matrix& x) {
  return x.rowwise() - x.colwise().mean();
}

/// Fixes the SVD column-sign ambiguity: the largest-magnitude entry of each
/// left singular vector is made positive, with the matching right vector
/// flipped alongside. Keeps factorizations reproducible for golden files.
inline void canonicalize_svd_signs(Matrix& u, Matrix& v) {
  for (Eigen::Index k = 0; k < u.cols(); ++k) {
    Eigen::Index imax = 0;
    u.col(k).cwiseAbs().maxCoeff(&imax);
    if (u(imax, k) < 0.0) {
      u.col(k) = -u.col(k);
      v.col(k) = -v.col(k);
    }
  }
}

}  // namespace detail

/// Sample covariance X'X/n, optionally after column-centering.
inline Matrix sample_covariance(const Matrix& x, bool center = false) {
  if (x.rows() < 1 || x.cols() < 1) {
    throw InvalidInputError("sample_covariance: empty matrix");
  }
  const double n = static_cast<double>(x.rows());
  if (center) {
    const Matrix xc = detail::center_columns(x);
    return detail::symmetrize(xc.transpose() * xc / n);
  }
  return detail::symmetrize(x.transpose() * x / n);
}

/// Cross-covariance X'Y/n with the same centering convention as
/// sample_covariance.
inline Matrix cross_covariance(const Matrix& x, const Matrix& y, bool center = false) {
  if (x.rows() < 1 || x.cols() < 1 || y.cols() < 1) {
    throw InvalidInputError("cross_covariance: empty matrix");
  }
  if (x.rows() != y.rows()) {
    throw DimensionMismatchError("cross_covariance: row counts differ (" +
                                 std::to_string(x.rows()) + " vs " +
                                 std::to_string(y.rows()) + ")");
  }
  const double n = static_cast<double>(x.rows());
  if (center) {
    return detail::center_columns(x).transpose() * detail::center_columns(y) / n;
  }
  return x.transpose() * y / n;
}

struct LedoitWolfResult {
  Matrix covariance;  // (1 - alpha) * Sigma_hat + alpha * mu * I
  double alpha = 0.0;
  double mu = 0.0;
};

/// Ledoit-Wolf shrinkage toward mu*I with plug-in intensity
///   alpha = min(1, (sum_k ||x_k x_k' - S||_F^2 / n^2) / ||S - mu I||_F^2)
/// computed on centered samples. The blend is strictly positive definite
/// whenever alpha > 0.
inline LedoitWolfResult ledoit_wolf(const Matrix& x) {
  if (x.rows() < 2) throw InvalidInputError("ledoit_wolf: needs n >= 2");
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  const Matrix xc = detail::center_columns(x);
  const Matrix s = detail::symmetrize(xc.transpose() * xc / static_cast<double>(n));

  const double mu = s.trace() / static_cast<double>(d);
  Matrix target = mu * Matrix::Identity(d, d);
  const double dist2 = (s - target).squaredNorm();

  LedoitWolfResult out;
  out.mu = mu;
  if (dist2 <= 1e-300) {  // already a multiple of the identity (e.g. d = 1)
    out.alpha = 0.0;
    out.covariance = s;
    return out;
  }

  double b2 = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    b2 += (xc.row(k).transpose() * xc.row(k) - s).squaredNorm();
  }
  b2 /= static_cast<double>(n) * static_cast<double>(n);

  out.alpha = std::min(1.0, b2 / dist2);
  out.covariance = detail::symmetrize((1.0 - out.alpha) * s + out.alpha * target);
  return out;
}

/// Principal (PSD) square root. Eigenvalues within tol*lambda_max of zero
/// (either sign: decomposition noise on degenerate input) are clamped to
/// zero; anything more negative is rejected.
inline Matrix sym_sqrt(const Matrix& a, double tol = kPsdTol) {
  if (a.rows() != a.cols()) throw InvalidInputError("sym_sqrt: matrix not square");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(detail::symmetrize(a));
  const Vector& lam = eig.eigenvalues();
  const double lmax = std::max(0.0, lam.maxCoeff());
  const double cut = tol * std::max(lmax, 1.0);
  if (lam.minCoeff() < -cut) {
    throw NotPsdError("sym_sqrt: matrix has eigenvalue " + std::to_string(lam.minCoeff()) +
                      " below the PSD tolerance");
  }
  Vector root(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    root(i) = lam(i) > cut ? std::sqrt(lam(i)) : 0.0;
  }
  return detail::symmetrize(eig.eigenvectors() * root.asDiagonal() *
                            eig.eigenvectors().transpose());
}

/// Pseudo-inverse square root: eigenvalues above rank_tol*lambda_max map to
/// lambda^{-1/2}, the rest to zero. Full-rank inputs satisfy B*A*B = I.
inline Matrix sym_inv_sqrt(const Matrix& a, double rank_tol = kRankTol,
                           double psd_tol = kPsdTol) {
  if (a.rows() != a.cols()) throw InvalidInputError("sym_inv_sqrt: matrix not square");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(detail::symmetrize(a));
  const Vector& lam = eig.eigenvalues();
  const double lmax = lam.maxCoeff();
  if (lmax <= 0.0) throw RankDeficientError("sym_inv_sqrt: no positive eigenvalues");
  if (lam.minCoeff() < -psd_tol * std::max(lmax, 1.0)) {
    throw NotPsdError("sym_inv_sqrt: matrix is not PSD within tolerance");
  }
  const double cut = rank_tol * lmax;
  Vector inv_root(lam.size());
  bool any = false;
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    if (lam(i) > cut) {
      inv_root(i) = 1.0 / std::sqrt(lam(i));
      any = true;
    } else {
      inv_root(i) = 0.0;
    }
  }
  if (!any) throw RankDeficientError("sym_inv_sqrt: all eigenvalues below threshold");
  return detail::symmetrize(eig.eigenvectors() * inv_root.asDiagonal() *
                            eig.eigenvectors().transpose());
}

/// Best rank-r factors with a deterministic sign convention.
inline SvdTriple top_r_svd(const Matrix& m, int r) {
  const Eigen::Index kmax = std::min(m.rows(), m.cols());
  if (r < 1 || r > kmax) {
    throw InvalidInputError("top_r_svd: rank " + std::to_string(r) + " out of range [1, " +
                            std::to_string(kmax) + "]");
  }
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  SvdTriple out;
  out.left = svd.matrixU().leftCols(r);
  out.singulars = svd.singularValues().head(r);
  out.right = svd.matrixV().leftCols(r);
  detail::canonicalize_svd_signs(out.left, out.right);
  return out;
}

/// Moore-Penrose pseudo-inverse with singular values below
/// rank_tol*sigma_max zeroed. The zero matrix maps to the zero matrix.
inline Matrix pseudo_inverse(const Matrix& m, double rank_tol = kRankTol) {
  if (m.rows() == 0 || m.cols() == 0) return Matrix::Zero(m.cols(), m.rows());
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  if (smax <= 0.0) return Matrix::Zero(m.cols(), m.rows());
  Vector inv(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    inv(i) = sv(i) > rank_tol * smax ? 1.0 / sv(i) : 0.0;
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

}  // namespace rrcca
