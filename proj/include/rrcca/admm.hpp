#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "rrcca/errors.hpp"
#include "rrcca/graph.hpp"
#include "rrcca/matrix_kernels.hpp"

namespace rrcca {

/// Parameters shared by the ADMM solvers: penalty weight rho, step
/// parameter delta, convergence threshold eps and the iteration cap.
struct AdmmConfig {
  double rho = 0.0;
  double delta = 1.0;
  double eps = 1e-5;
  int max_iter = 5000;
  bool record_objective = true;

  void validate() const {
    if (rho < 0.0) throw InvalidInputError("AdmmConfig: rho must be >= 0");
    if (delta <= 0.0) throw InvalidInputError("AdmmConfig: delta must be > 0");
    if (eps <= 0.0) throw InvalidInputError("AdmmConfig: eps must be > 0");
    if (max_iter < 1) throw InvalidInputError("AdmmConfig: max_iter must be >= 1");
  }
};

struct SolveTrace {
  int iterations = 0;
  double primal_residual = 0.0;  // ||B - Z||_F at exit
  double dual_residual = 0.0;    // ||B_t - B_{t-1}||_F at exit
  bool converged = false;
  std::vector<double> objective_history;
  bool used_pinv = false;  // graph solver fell back to a pseudo-inverse phase-1 solve
};

/// Optional initial state for warm starts across a rho grid.
struct WarmStart {
  Matrix b, z, u;
};

struct SolveResult {
  Matrix b;          // the Z iterate: exactly row-sparse for the l21 penalties
  Matrix b_iterate;  // final B iterate (dense up to eps)
  Matrix dual;       // final scaled dual variable, for warm restarts
  SolveTrace trace;
};

/// Block soft-thresholding R_t(x) = (1 - t/||x||)_+ x.
inline Vector row_shrink(const Vector& x, double t) {
  const double nrm = x.norm();
  if (nrm <= t || nrm == 0.0) return Vector::Zero(x.size());
  return (1.0 - t / nrm) * x;
}

namespace detail {

/// Applies (X'X/n + delta I)^{-1} with a factorization computed once.
/// For p > n the p x p solve is replaced by the Woodbury form
///   (1/delta) [ I - X'(n delta I + X X')^{-1} X ]
/// so the per-iteration cost stays linear in p.
class RidgeNormalOperator {
 public:
  RidgeNormalOperator(const Matrix& x, double delta) : x_(x), delta_(delta) {
    const Eigen::Index n = x.rows(), p = x.cols();
    woodbury_ = p > n;
    if (woodbury_) {
      Matrix gram = x * x.transpose();
      gram.diagonal().array() += static_cast<double>(n) * delta;
      llt_.compute(gram);
    } else {
      Matrix normal = x.transpose() * x / static_cast<double>(n);
      normal.diagonal().array() += delta;
      llt_.compute(normal);
    }
    if (llt_.info() != Eigen::Success) {
      throw Error("RidgeNormalOperator: Cholesky factorization failed");
    }
  }

  Matrix apply(const Matrix& rhs) const {
    if (!woodbury_) return llt_.solve(rhs);
    return (rhs - x_.transpose() * llt_.solve(x_ * rhs)) / delta_;
  }

 private:
  const Matrix& x_;
  double delta_;
  bool woodbury_ = false;
  Eigen::LLT<Matrix> llt_;
};

inline double l21_norm(const Matrix& b) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < b.rows(); ++j) s += b.row(j).norm();
  return s;
}

/// Shared ADMM loop. shrink(B + U) -> Z is the only penalty-specific step;
/// penalty(Z) supplies the regularizer value for the objective history.
template <typename ShrinkFn, typename PenaltyFn>
SolveResult admm_l21_loop(const Matrix& x, const Matrix& y0, const AdmmConfig& cfg,
                          const WarmStart* warm, ShrinkFn&& shrink, PenaltyFn&& penalty) {
  cfg.validate();
  const Eigen::Index n = x.rows(), p = x.cols(), q = y0.cols();
  if (y0.rows() != n) throw DimensionMismatchError("admm: X and Y0 row counts differ");

  const RidgeNormalOperator op(x, cfg.delta);
  const Matrix c = x.transpose() * y0 / static_cast<double>(n);

  Matrix b = warm ? warm->b : Matrix::Zero(p, q);
  Matrix z = warm ? warm->z : Matrix::Zero(p, q);
  Matrix u = warm ? warm->u : Matrix::Zero(p, q);
  if (b.rows() != p || b.cols() != q || z.rows() != p || u.rows() != p) {
    throw DimensionMismatchError("admm: warm start has wrong shape");
  }

  SolveResult res;
  res.trace.objective_history.reserve(cfg.record_objective ? 64 : 0);
  Matrix b_prev = b;
  for (int t = 0; t < cfg.max_iter; ++t) {
    b = op.apply(c + cfg.delta * (z - u));
    z = shrink(b + u);
    u += b - z;

    res.trace.iterations = t + 1;
    res.trace.dual_residual = (b - b_prev).norm();
    res.trace.primal_residual = (b - z).norm();
    if (cfg.record_objective) {
      res.trace.objective_history.push_back(
          (y0 - x * z).squaredNorm() / static_cast<double>(n) + penalty(z));
    }
    b_prev = b;
    if (res.trace.dual_residual <= cfg.eps && res.trace.primal_residual <= cfg.eps) {
      res.trace.converged = true;
      break;
    }
  }
  res.b = std::move(z);
  res.b_iterate = std::move(b);
  res.dual = std::move(u);
  return res;
}

}  // namespace detail

/// Row-sparse multivariate regression
///   min_B (1/n) ||Y0 - X B||_F^2 + rho ||B||_21
/// solved by ADMM with a fixed normal-equation factorization. Returns the Z
/// iterate, which is exactly row-sparse, so support detection needs no
/// thresholding. Non-convergence is reported through the trace, never as an
/// exception.
///
/// With the B-step written as (X'X/n + delta I)^{-1}(X'Y0/n + delta(Z - U)),
/// the augmented-Lagrangian weight is 2*delta, so the proximal threshold
/// consistent with the (1/n)-scaled loss is rho/(2*delta). A threshold of
/// rho/delta would converge to the minimizer of the 2*rho problem instead.
inline SolveResult solve_sparse_l21(const Matrix& x, const Matrix& y0, const AdmmConfig& cfg,
                                    const WarmStart* warm = nullptr) {
  const double t = cfg.rho / (2.0 * cfg.delta);
  return detail::admm_l21_loop(
      x, y0, cfg, warm,
      [t](const Matrix& m) {
        Matrix z(m.rows(), m.cols());
        for (Eigen::Index j = 0; j < m.rows(); ++j) {
          const double nrm = m.row(j).norm();
          if (nrm <= t || nrm == 0.0) {
            z.row(j).setZero();
          } else {
            z.row(j) = (1.0 - t / nrm) * m.row(j);
          }
        }
        return z;
      },
      [rho = cfg.rho](const Matrix& z) { return rho * detail::l21_norm(z); });
}

inline void validate_partition(const std::vector<std::vector<int>>& groups, Eigen::Index p) {
  std::vector<char> hit(p, 0);
  for (const auto& g : groups) {
    if (g.empty()) throw InvalidInputError("partition: empty group");
    for (int j : g) {
      if (j < 0 || j >= p) throw InvalidInputError("partition: index out of range");
      if (hit[j]) throw InvalidInputError("partition: overlapping groups");
      hit[j] = 1;
    }
  }
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!hit[j]) throw InvalidInputError("partition: does not cover all rows");
  }
}

/// Group-sparse variant: blocks of rows are shrunk jointly in Frobenius norm
/// at threshold rho * sqrt(|G_j|) / (2*delta), i.e. the penalty is
/// rho * sum_g sqrt(T_g) ||B_g||_F (see solve_sparse_l21 on the threshold
/// scaling).
inline SolveResult solve_group_l21(const Matrix& x, const Matrix& y0,
                                   const std::vector<std::vector<int>>& groups,
                                   const AdmmConfig& cfg, const WarmStart* warm = nullptr) {
  validate_partition(groups, x.cols());
  const double base = cfg.rho / (2.0 * cfg.delta);
  return detail::admm_l21_loop(
      x, y0, cfg, warm,
      [&groups, base](const Matrix& m) {
        Matrix z = Matrix::Zero(m.rows(), m.cols());
        for (const auto& g : groups) {
          double nrm2 = 0.0;
          for (int j : g) nrm2 += m.row(j).squaredNorm();
          const double nrm = std::sqrt(nrm2);
          const double t = base * std::sqrt(static_cast<double>(g.size()));
          if (nrm <= t || nrm == 0.0) continue;
          const double scale = 1.0 - t / nrm;
          for (int j : g) z.row(j) = scale * m.row(j);
        }
        return z;
      },
      [&groups, rho = cfg.rho](const Matrix& z) {
        double pen = 0.0;
        for (const auto& g : groups) {
          double nrm2 = 0.0;
          for (int j : g) nrm2 += z.row(j).squaredNorm();
          pen += std::sqrt(static_cast<double>(g.size())) * std::sqrt(nrm2);
        }
        return rho * pen;
      });
}

namespace detail {

struct GraphDeflation {
  Matrix pi_part;     // p x q coefficients constant within components
  Matrix residual;    // Y0 - X * pi_part
  bool used_pinv = false;
};

/// Least-squares fit of Y0 on the component-mean features of X (the range of
/// X*Pi), solved per connected component. Rank deficiency (collinear
/// component means) falls back to the pseudo-inverse and is flagged.
inline GraphDeflation graph_deflate(const Matrix& x, const Matrix& y0,
                                    const GraphStructure& g) {
  const Eigen::Index n = x.rows(), q = y0.cols();
  const int nc = g.component_count();
  Matrix sums = Matrix::Zero(n, nc);  // column i: sum of X columns in component i
  for (int v = 0; v < g.p; ++v) sums.col(g.component_of[v]) += x.col(v);

  GraphDeflation out;
  Eigen::ColPivHouseholderQR<Matrix> qr(sums);
  Matrix coef;  // nc x q
  if (qr.rank() < nc) {
    out.used_pinv = true;
    coef = pseudo_inverse(sums) * y0;
  } else {
    coef = qr.solve(y0);
  }
  out.pi_part = Matrix::Zero(g.p, q);
  for (int v = 0; v < g.p; ++v) out.pi_part.row(v) = coef.row(g.component_of[v]);
  out.residual = y0 - sums * coef;
  return out;
}

}  // namespace detail

struct GraphSolveResult {
  Matrix b;              // p x q, final coefficients pi_part + Gamma^dagger * theta
  Matrix pi_part;        // p x q, componentwise-constant part
  Matrix theta;          // m x q, edge-space coefficients (exactly row-sparse)
  Matrix theta_iterate;  // edge-space B iterate, for warm restarts
  Matrix theta_dual;     // edge-space scaled dual, for warm restarts
  SolveTrace trace;
};

/// Total-variation penalized regression
///   min_B (1/n) ||Y0 - X B||_F^2 + rho ||Gamma B||_21
/// via the two-phase scheme: the component-constant part is fit by plain
/// least squares and deflated, then ADMM runs in edge space with design
/// X * Gamma^dagger and rowwise shrinkage at rho/delta.
inline GraphSolveResult solve_graph_tv(const Matrix& x, const Matrix& y0,
                                       const GraphStructure& g, const AdmmConfig& cfg,
                                       const WarmStart* warm = nullptr) {
  if (g.p != x.cols()) {
    throw DimensionMismatchError("solve_graph_tv: graph size does not match X columns");
  }
  auto defl = detail::graph_deflate(x, y0, g);

  GraphSolveResult out;
  out.pi_part = std::move(defl.pi_part);
  if (g.edge_count() == 0) {
    out.b = out.pi_part;
    out.theta = Matrix::Zero(0, y0.cols());
    out.theta_iterate = out.theta;
    out.theta_dual = out.theta;
    out.trace.converged = true;
    out.trace.used_pinv = defl.used_pinv;
    return out;
  }

  const Matrix edge_design = x * g.incidence_pinv;  // n x m
  SolveResult inner = solve_sparse_l21(edge_design, defl.residual, cfg, warm);
  out.theta = std::move(inner.b);
  out.theta_iterate = std::move(inner.b_iterate);
  out.theta_dual = std::move(inner.dual);
  out.trace = std::move(inner.trace);
  out.trace.used_pinv = defl.used_pinv;
  out.b = out.pi_part + g.incidence_pinv * out.theta;
  return out;
}

/// Exact minimizer of (1/n)||Y0 - X B||_F^2 + rho Tr(B' K B).
/// Primal path solves the p x p normal equations; for p > n with invertible
/// K the dual form B = K^{-1} X' (X K^{-1} X' + n rho I)^{-1} Y0 replaces it
/// with an n x n solve.
inline Matrix solve_ridge(const Matrix& x, const Matrix& y0, const Matrix& k, double rho,
                          double rank_tol = kRankTol) {
  const Eigen::Index n = x.rows(), p = x.cols();
  if (y0.rows() != n) throw DimensionMismatchError("solve_ridge: X and Y0 row counts differ");
  if (k.rows() != p || k.cols() != p) {
    throw DimensionMismatchError("solve_ridge: kernel must be p x p");
  }
  if (rho < 0.0) throw InvalidInputError("solve_ridge: rho must be >= 0");

  if (rho == 0.0) {
    Eigen::ColPivHouseholderQR<Matrix> qr(x);
    if (qr.rank() < p) {
      throw RankDeficientError("solve_ridge: rho = 0 with rank-deficient design");
    }
    return qr.solve(y0);
  }

  if (p > n) {
    Eigen::LLT<Matrix> kllt(detail::symmetrize(k));
    if (kllt.info() == Eigen::Success) {
      const Matrix kinv_xt = kllt.solve(x.transpose());  // p x n
      Matrix gram = x * kinv_xt;
      gram.diagonal().array() += static_cast<double>(n) * rho;
      return kinv_xt * gram.llt().solve(y0);
    }
    // K not strictly PD: fall through to the primal solve.
  }

  Matrix normal = x.transpose() * x / static_cast<double>(n) + rho * detail::symmetrize(k);
  Eigen::LDLT<Matrix> ldlt(normal);
  if (ldlt.info() != Eigen::Success ||
      ldlt.vectorD().minCoeff() <= rank_tol * std::max(1.0, ldlt.vectorD().maxCoeff())) {
    throw RankDeficientError("solve_ridge: penalized normal matrix is singular");
  }
  return ldlt.solve(x.transpose() * y0 / static_cast<double>(n));
}

/// Smallest rho that zeroes the penalized part under an orthonormal design;
/// for general X'X/n it is a heuristic upper anchor for CV grids, not an
/// exact threshold.
inline double rho_max_sparse(const Matrix& x, const Matrix& y0) {
  const Matrix c = x.transpose() * y0 / static_cast<double>(x.rows());
  double m = 0.0;
  for (Eigen::Index j = 0; j < c.rows(); ++j) m = std::max(m, c.row(j).norm());
  return 2.0 * m;
}

inline double rho_max_group(const Matrix& x, const Matrix& y0,
                            const std::vector<std::vector<int>>& groups) {
  validate_partition(groups, x.cols());
  const Matrix c = x.transpose() * y0 / static_cast<double>(x.rows());
  double m = 0.0;
  for (const auto& g : groups) {
    double nrm2 = 0.0;
    for (int j : g) nrm2 += c.row(j).squaredNorm();
    m = std::max(m, std::sqrt(nrm2 / static_cast<double>(g.size())));
  }
  return 2.0 * m;
}

inline double rho_max_graph(const Matrix& x, const Matrix& y0, const GraphStructure& g) {
  if (g.p != x.cols()) {
    throw DimensionMismatchError("rho_max_graph: graph size does not match X columns");
  }
  if (g.edge_count() == 0) return 0.0;
  const auto defl = detail::graph_deflate(x, y0, g);
  return rho_max_sparse(x * g.incidence_pinv, defl.residual);
}

}  // namespace rrcca
