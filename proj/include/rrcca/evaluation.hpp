#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <vector>

#include "rrcca/cca.hpp"
#include "rrcca/errors.hpp"
#include "rrcca/matrix_kernels.hpp"
#include "rrcca/rng.hpp"
#include "rrcca/synthetic.hpp"

namespace rrcca {

namespace detail {

/// Orthonormal basis of the column span, rank-truncated by singular value.
inline Matrix orthonormal_range(const Matrix& a, double rank_tol) {
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU);
  const Vector& sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  if (smax <= 0.0) throw InvalidInputError("subspace_distance: zero matrix");
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv(rank) > rank_tol * smax) ++rank;
  return svd.matrixU().leftCols(rank);
}

}  // namespace detail

namespace detail {

/// Sines of the principal angles between the spans of two orthonormal
/// bases, computed from the residual projection (I - Q_b Q_b')Q_a of the
/// smaller-rank basis. 1 - cos^2 cancels catastrophically for near-equal
/// spans; the residual route keeps full precision at small angles.
inline Vector principal_sines(const Matrix& qa_in, const Matrix& qb_in) {
  const bool swap = qa_in.cols() > qb_in.cols();
  const Matrix& qa = swap ? qb_in : qa_in;
  const Matrix& qb = swap ? qa_in : qb_in;
  const Matrix resid = qa - qb * (qb.transpose() * qa);
  Eigen::BDCSVD<Matrix> svd(resid);
  return svd.singularValues().cwiseMin(1.0).cwiseMax(0.0);
}

}  // namespace detail

/// Principal angles between the column spans, ascending. Small angles come
/// from the sine route, large ones from the cosine route, each where it is
/// accurate.
inline Vector principal_angles(const Matrix& a, const Matrix& b, double rank_tol = kRankTol) {
  if (a.rows() != b.rows()) throw DimensionMismatchError("principal_angles: row counts differ");
  const Matrix qa = detail::orthonormal_range(a, rank_tol);
  const Matrix qb = detail::orthonormal_range(b, rank_tol);
  Vector sines = detail::principal_sines(qa, qb);  // ascending after sort
  std::sort(sines.begin(), sines.end());
  Eigen::BDCSVD<Matrix> svd(qa.transpose() * qb);
  Vector cosines = svd.singularValues().cwiseMin(1.0).cwiseMax(0.0);  // descending
  Vector angles(sines.size());
  for (Eigen::Index i = 0; i < sines.size(); ++i) {
    angles(i) = cosines(i) * cosines(i) >= 0.5 ? std::asin(sines(i)) : std::acos(cosines(i));
  }
  return angles;
}

/// Chordal sin-theta distance ||sin Theta||_F between column spans: zero iff
/// the spans coincide, sqrt(r) at maximal separation, symmetric, and
/// invariant to right-multiplication by any invertible matrix.
inline double subspace_distance(const Matrix& a, const Matrix& b, double rank_tol = kRankTol) {
  if (a.rows() != b.rows()) throw DimensionMismatchError("subspace_distance: row counts differ");
  const Vector sines =
      detail::principal_sines(detail::orthonormal_range(a, rank_tol),
                              detail::orthonormal_range(b, rank_tol));
  return sines.norm();
}

/// Distance between the vertically stacked direction matrices [U;V], the
/// joint-recovery score used throughout the synthetic benchmarks.
inline double stacked_direction_distance(const CcaModel& model, const GroundTruth& gt) {
  if (model.u.rows() != gt.u_star.rows() || model.v.rows() != gt.v_star.rows()) {
    throw DimensionMismatchError("stacked_direction_distance: dimension mismatch");
  }
  Matrix est(model.u.rows() + model.v.rows(), model.u.cols());
  est.topRows(model.u.rows()) = model.u;
  est.bottomRows(model.v.rows()) = model.v;
  Matrix truth(gt.u_star.rows() + gt.v_star.rows(), gt.u_star.cols());
  truth.topRows(gt.u_star.rows()) = gt.u_star;
  truth.bottomRows(gt.v_star.rows()) = gt.v_star;
  return subspace_distance(est, truth);
}

/// Mean over components of the empirical Pearson correlation between the
/// held-out variate pairs; zero-variance components contribute 0.
inline double validation_correlation(const CcaModel& model, const Matrix& x_val,
                                     const Matrix& y_val) {
  if (x_val.rows() < 3) throw InvalidInputError("validation_correlation: needs n_val >= 3");
  const auto [xu, yv] = canonical_variates(model, x_val, y_val);
  const int r = static_cast<int>(xu.cols());
  double total = 0.0;
  for (int i = 0; i < r; ++i) {
    const Vector a = xu.col(i).array() - xu.col(i).mean();
    const Vector b = yv.col(i).array() - yv.col(i).mean();
    const double va = a.squaredNorm(), vb = b.squaredNorm();
    if (va <= 0.0 || vb <= 0.0) continue;
    total += a.dot(b) / std::sqrt(va * vb);
  }
  return total / static_cast<double>(r);
}

struct SupportMetrics {
  double fpr = 0.0;  // |est \ true| / max(1, p - |true|)
  double fnr = 0.0;  // |true \ est| / max(1, |true|)
  int est_support_size = 0;
  int true_support_size = 0;
};

/// Support recovery rates between estimated and true direction matrices;
/// rows count as support when their norm exceeds tol (tol = 0 suits
/// estimates coming from the exactly-sparse ADMM iterate).
inline SupportMetrics support_metrics(const Matrix& u_hat, const Matrix& u_star,
                                      double tol = 0.0) {
  if (u_hat.rows() != u_star.rows()) {
    throw DimensionMismatchError("support_metrics: row counts differ");
  }
  const Eigen::Index p = u_hat.rows();
  SupportMetrics out;
  int false_pos = 0, false_neg = 0;
  for (Eigen::Index j = 0; j < p; ++j) {
    const bool est = u_hat.row(j).norm() > tol;
    const bool tru = u_star.row(j).norm() > tol;
    out.est_support_size += est;
    out.true_support_size += tru;
    false_pos += est && !tru;
    false_neg += !est && tru;
  }
  out.fpr = static_cast<double>(false_pos) /
            std::max(1.0, static_cast<double>(p - out.true_support_size));
  out.fnr = static_cast<double>(false_neg) / std::max(1.0, static_cast<double>(out.true_support_size));
  return out;
}

/// Fold labels for the k-fold split: a pure function of (n, k, seed) -- a
/// seeded shuffle cut into k contiguous chunks.
inline std::vector<int> fold_assignment(int n, int k, std::uint64_t seed) {
  if (k < 2) throw InvalidInputError("fold_assignment: need k >= 2");
  if (n < 2 * k) throw InvalidInputError("fold_assignment: need n >= 2k");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<int> fold(n, 0);
  const int base = n / k, extra = n % k;
  int pos = 0;
  for (int f = 0; f < k; ++f) {
    const int len = base + (f < extra ? 1 : 0);
    for (int i = 0; i < len; ++i) fold[order[pos++]] = f;
  }
  return fold;
}

struct CvReport {
  std::vector<double> grid;
  Matrix fold_scores;   // folds x grid, test MSE between variates
  std::vector<double> mean_scores;
  int selected_index = -1;
  double selected_rho = 0.0;
  CcaModel refit;
};

/// Ten log-spaced penalties on [min_frac, 1] * rho_max(train).
inline std::vector<double> default_rho_grid(const Matrix& x, const Matrix& y,
                                            const FitOptions& opts, int size = 10,
                                            double min_frac = 1e-3) {
  if (size < 1 || min_frac <= 0.0 || min_frac > 1.0) {
    throw InvalidInputError("default_rho_grid: bad grid parameters");
  }
  const Matrix xc = opts.center ? detail::center_columns(x) : x;
  const Matrix yc = opts.center ? detail::center_columns(y) : y;
  const NormalizedY ny = normalize_y(yc, opts.shrink_sigma_y, false, opts.rank_tol);
  double rho_max = 0.0;
  if (const auto* gp = std::get_if<GroupPenalty>(&opts.penalty)) {
    rho_max = rho_max_group(xc, ny.y0, gp->groups);
  } else if (const auto* tp = std::get_if<GraphPenalty>(&opts.penalty)) {
    rho_max = rho_max_graph(xc, ny.y0, *tp->graph);
  } else if (std::holds_alternative<SparsePenalty>(opts.penalty) ||
             std::holds_alternative<RidgePenalty>(opts.penalty)) {
    rho_max = rho_max_sparse(xc, ny.y0);
  } else {
    throw InvalidInputError("default_rho_grid: penalty required");
  }
  std::vector<double> grid(size);
  if (rho_max <= 0.0 || size == 1) {
    std::fill(grid.begin(), grid.end(), rho_max);
    return grid;
  }
  const double lmin = std::log(min_frac);
  for (int i = 0; i < size; ++i) {
    grid[i] = rho_max * std::exp(lmin * (1.0 - static_cast<double>(i) / (size - 1)));
  }
  return grid;
}

namespace detail {

inline std::pair<Matrix, Matrix> select_rows(const Matrix& x, const Matrix& y,
                                             const std::vector<int>& rows) {
  Matrix xs(rows.size(), x.cols()), ys(rows.size(), y.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    xs.row(i) = x.row(rows[i]);
    ys.row(i) = y.row(rows[i]);
  }
  return {std::move(xs), std::move(ys)};
}

}  // namespace detail

/// Selects rho by k-fold CV on the test MSE between canonical variates,
/// (1/n_test) ||X_test U - Y_test V||_F^2, with Sigma_Y estimated from
/// training rows only and warm starts along the descending-rho path. Empty
/// models are scored as the whitened response energy an empty regression
/// leaves unexplained; failed fits score +inf. Ties select the smallest
/// rho. The returned model is refit on all rows at the selected rho.
inline CvReport kfold_cv(const Matrix& x, const Matrix& y, const FitOptions& opts,
                         const std::vector<double>& grid, int k, std::uint64_t seed,
                         const std::vector<int>* fold_override = nullptr) {
  if (grid.empty()) throw InvalidInputError("kfold_cv: empty grid");
  if (std::holds_alternative<NoPenalty>(opts.penalty)) {
    throw InvalidInputError("kfold_cv: penalty required");
  }
  const int n = static_cast<int>(x.rows());
  const std::vector<int> fold =
      fold_override ? *fold_override : fold_assignment(n, k, seed);
  if (static_cast<int>(fold.size()) != n) {
    throw InvalidInputError("kfold_cv: fold assignment size mismatch");
  }

  const Matrix xc = opts.center ? detail::center_columns(x) : x;
  const Matrix yc = opts.center ? detail::center_columns(y) : y;

  FitOptions fold_opts = opts;  // fold solves skip the objective bookkeeping
  fold_opts.admm.record_objective = false;

  const int g = static_cast<int>(grid.size());
  std::vector<int> order(g);  // solve in descending rho for warm starts
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&grid](int a, int b) { return grid[a] > grid[b]; });

  CvReport report;
  report.grid = grid;
  report.fold_scores = Matrix::Zero(k, g);

  for (int f = 0; f < k; ++f) {
    std::vector<int> train_rows, test_rows;
    for (int i = 0; i < n; ++i) (fold[i] == f ? test_rows : train_rows).push_back(i);
    const auto [x_tr, y_tr] = detail::select_rows(xc, yc, train_rows);
    const auto [x_te, y_te] = detail::select_rows(xc, yc, test_rows);
    const double n_test = static_cast<double>(test_rows.size());

    NormalizedY ny;
    try {
      ny = normalize_y(y_tr, opts.shrink_sigma_y, false, opts.rank_tol);
    } catch (const Error&) {
      report.fold_scores.row(f).setConstant(std::numeric_limits<double>::infinity());
      continue;
    }
    const double empty_score = (y_te * ny.inv_sqrt).squaredNorm() / n_test;

    WarmStart warm;
    bool have_warm = false;
    std::map<double, double> memo;  // duplicate grid entries share one solve
    for (int idx : order) {
      const double rho = grid[idx];
      if (const auto it = memo.find(rho); it != memo.end()) {
        report.fold_scores(f, idx) = it->second;
        continue;
      }
      double score;
      try {
        WarmStart next;
        auto solved =
            detail::solve_penalty(x_tr, ny.y0, with_rho(opts.penalty, rho), fold_opts.admm,
                                  have_warm ? &warm : nullptr, &next);
        warm = std::move(next);
        have_warm = true;
        CcaModel model = detail::assemble_penalized(x_tr, solved.b, ny, opts, solved.method,
                                                    rho, std::move(solved.trace),
                                                    solved.row_sparse);
        if (model.rank() < opts.rank) {
          // A collapsed fit carries fewer variate pairs, so its summed MSE
          // is not comparable with full-rank grid points; score it like the
          // empty model (it failed to deliver the requested directions).
          score = empty_score;
        } else {
          score = (x_te * model.u - y_te * model.v).squaredNorm() / n_test;
        }
      } catch (const EmptyModelError&) {
        score = empty_score;
      } catch (const Error&) {
        score = std::numeric_limits<double>::infinity();
      }
      memo[rho] = score;
      report.fold_scores(f, idx) = score;
    }
  }

  report.mean_scores.resize(g);
  for (int j = 0; j < g; ++j) report.mean_scores[j] = report.fold_scores.col(j).mean();

  int best = -1;
  for (int j = 0; j < g; ++j) {
    if (!std::isfinite(report.mean_scores[j])) continue;
    if (best < 0 || report.mean_scores[j] < report.mean_scores[best] ||
        (report.mean_scores[j] == report.mean_scores[best] && grid[j] < grid[best])) {
      best = j;
    }
  }
  if (best < 0) throw CvFailedError("kfold_cv: every grid point failed on some fold");

  report.selected_index = best;
  report.selected_rho = grid[best];
  FitOptions refit_opts = opts;
  refit_opts.penalty = with_rho(opts.penalty, report.selected_rho);
  refit_opts.center = false;  // xc/yc are already centered when requested
  report.refit = fit_cca_penalized(xc, yc, refit_opts);
  return report;
}

}  // namespace rrcca
