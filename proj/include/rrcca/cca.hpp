#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "rrcca/admm.hpp"
#include "rrcca/errors.hpp"
#include "rrcca/graph.hpp"
#include "rrcca/matrix_kernels.hpp"

namespace rrcca {

enum class URecovery { ViaB, ViaSqrt };

struct NoPenalty {};
struct SparsePenalty {
  double rho = 0.0;
};
struct GroupPenalty {
  std::vector<std::vector<int>> groups;
  double rho = 0.0;
};
struct GraphPenalty {
  std::shared_ptr<const GraphStructure> graph;
  double rho = 0.0;
};
struct RidgePenalty {
  std::shared_ptr<const Matrix> kernel;  // null means identity
  double rho = 0.0;
};
using Penalty = std::variant<NoPenalty, SparsePenalty, GroupPenalty, GraphPenalty, RidgePenalty>;

inline double penalty_rho(const Penalty& p) {
  return std::visit(
      [](const auto& v) -> double {
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, NoPenalty>) {
          return 0.0;
        } else {
          return v.rho;
        }
      },
      p);
}

inline Penalty with_rho(Penalty p, double rho) {
  std::visit(
      [rho](auto& v) {
        if constexpr (!std::is_same_v<std::decay_t<decltype(v)>, NoPenalty>) v.rho = rho;
      },
      p);
  return p;
}

struct FitOptions {
  int rank = 1;
  Penalty penalty = NoPenalty{};
  bool shrink_sigma_y = false;     // Ledoit-Wolf shrink of Sigma_Y before whitening
  URecovery u_recovery = URecovery::ViaB;
  AdmmConfig admm{};               // rho is taken from the penalty, not from here
  bool center = false;             // column-center X and Y before fitting
  bool pinv_fallback = false;      // unpenalized fit via pseudo-inverses on singular covariances
  double rank_tol = kRankTol;

  void validate(Eigen::Index q) const {
    if (rank < 1) throw InvalidInputError("FitOptions: rank must be >= 1");
    if (rank > q) throw InvalidInputError("FitOptions: rank exceeds q");
  }
};

/// Fitted canonical directions and correlations. The support, when present,
/// is exactly the set of nonzero rows of the solver's coefficient matrix.
struct CcaModel {
  Matrix u;              // p x r_eff
  Matrix v;              // q x r_eff
  Vector correlations;   // r_eff, nonincreasing, >= 0
  std::optional<std::vector<int>> support;
  std::string method;
  double penalty_value = 0.0;
  int requested_rank = 0;
  bool rank_reduced = false;
  Matrix gram_u;  // U' Sigma_hat_X U, reported as a diagnostic, never enforced
  SolveTrace trace;

  int rank() const { return static_cast<int>(correlations.size()); }
};

struct NormalizedY {
  Matrix y0;        // Y * Sigma_Y^{-1/2}
  Matrix inv_sqrt;  // Sigma_Y^{-1/2}, kept for recovering V
  Matrix sigma_y;   // the (possibly shrunk) covariance that was inverted
  double lw_alpha = 0.0;
};

/// Whitens Y by the inverse square root of its (optionally Ledoit-Wolf
/// shrunk) covariance. Without shrinkage a rank-deficient covariance is an
/// error; with exact inversion sample_covariance(y0) = I.
inline NormalizedY normalize_y(const Matrix& y, bool shrink, bool center = false,
                               double rank_tol = kRankTol) {
  NormalizedY out;
  if (shrink) {
    auto lw = ledoit_wolf(center ? detail::center_columns(y) : y);
    out.sigma_y = std::move(lw.covariance);
    out.lw_alpha = lw.alpha;
  } else {
    out.sigma_y = sample_covariance(y, center);
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(out.sigma_y, Eigen::EigenvaluesOnly);
  const double lmax = eig.eigenvalues().maxCoeff();
  if (lmax <= 0.0 || eig.eigenvalues().minCoeff() <= rank_tol * lmax) {
    throw RankDeficientError(
        "normalize_y: Sigma_Y is rank deficient; enable shrinkage or reduce q");
  }
  out.inv_sqrt = sym_inv_sqrt(out.sigma_y, rank_tol);
  out.y0 = (center ? detail::center_columns(y) : y) * out.inv_sqrt;
  return out;
}

namespace detail {

struct XSpectral {
  Matrix sqrt;      // Sigma_X^{1/2}
  Matrix inv;       // Sigma_X^{-1} (pseudo-inverse when allowed)
  Matrix inv_sqrt;  // Sigma_X^{-1/2}
  bool deficient = false;
};

inline XSpectral x_spectral(const Matrix& sigma_x, bool allow_pinv, double rank_tol) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma_x);
  const Vector& lam = eig.eigenvalues();
  const double lmax = std::max(lam.maxCoeff(), 0.0);
  XSpectral out;
  if (lmax <= 0.0 || lam.minCoeff() <= rank_tol * lmax) {
    if (!allow_pinv) {
      throw RankDeficientError("fit_cca_rrr: Sigma_X is rank deficient");
    }
    out.deficient = true;
  }
  const double cut = rank_tol * std::max(lmax, 0.0);
  Vector root(lam.size()), inv(lam.size()), inv_root(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    const double l = std::max(lam(i), 0.0);
    root(i) = std::sqrt(l);
    inv(i) = l > cut ? 1.0 / l : 0.0;
    inv_root(i) = l > cut ? 1.0 / std::sqrt(l) : 0.0;
  }
  const Matrix& vecs = eig.eigenvectors();
  out.sqrt = detail::symmetrize(vecs * root.asDiagonal() * vecs.transpose());
  out.inv = detail::symmetrize(vecs * inv.asDiagonal() * vecs.transpose());
  out.inv_sqrt = detail::symmetrize(vecs * inv_root.asDiagonal() * vecs.transpose());
  return out;
}

/// Keeps singular values above the collapse threshold; components with a
/// (near) zero correlation cannot be carried into U = B V0 Lambda^{-1}.
inline int effective_rank(const Vector& singulars, double floor = 1e-10) {
  int r = 0;
  while (r < singulars.size() && singulars(r) > floor) ++r;
  return r;
}

}  // namespace detail

/// Reduced-rank-regression CCA for the low-dimensional regime:
/// B = Sigma_X^{-1} Sigma_XY Sigma_Y^{-1/2}, followed by the rank-r SVD of
/// Sigma_X^{1/2} B. With pinv_fallback the inverses become pseudo-inverses
/// (the classical high-dimensional baseline, inconsistent by design).
inline CcaModel fit_cca_rrr(const Matrix& x_in, const Matrix& y_in, const FitOptions& opts) {
  opts.validate(y_in.cols());
  if (x_in.rows() != y_in.rows()) {
    throw DimensionMismatchError("fit_cca_rrr: X and Y row counts differ");
  }
  const Matrix x = opts.center ? detail::center_columns(x_in) : x_in;
  const Matrix y = opts.center ? detail::center_columns(y_in) : y_in;
  const Eigen::Index n = x.rows();

  NormalizedY ny = [&] {
    try {
      return normalize_y(y, opts.shrink_sigma_y, false, opts.rank_tol);
    } catch (const RankDeficientError&) {
      if (!opts.pinv_fallback) throw;
      NormalizedY out;
      out.sigma_y = sample_covariance(y, false);
      out.inv_sqrt = sym_inv_sqrt(out.sigma_y, opts.rank_tol);
      out.y0 = y * out.inv_sqrt;
      return out;
    }
  }();

  const Matrix sigma_x = sample_covariance(x, false);
  const auto sx = detail::x_spectral(sigma_x, opts.pinv_fallback, opts.rank_tol);

  const Matrix b = sx.inv * (x.transpose() * ny.y0 / static_cast<double>(n));
  const auto svd = top_r_svd(sx.sqrt * b, std::min<int>(opts.rank, std::min(x.cols(), y.cols())));

  const int r_eff = detail::effective_rank(svd.singulars);
  if (r_eff == 0) throw RankDeficientError("fit_cca_rrr: all canonical correlations vanish");

  CcaModel model;
  model.method = opts.pinv_fallback ? "rrr_pinv" : "rrr";
  model.requested_rank = opts.rank;
  model.rank_reduced = r_eff < opts.rank;
  model.correlations = svd.singulars.head(r_eff);
  model.v = ny.inv_sqrt * svd.right.leftCols(r_eff);
  if (opts.u_recovery == URecovery::ViaB) {
    model.u = b * svd.right.leftCols(r_eff) *
              model.correlations.cwiseInverse().asDiagonal();
  } else {
    model.u = sx.inv_sqrt * svd.left.leftCols(r_eff);
  }
  model.gram_u = model.u.transpose() * sigma_x * model.u;
  return model;
}

namespace detail {

/// Assembles a CcaModel from a penalized coefficient matrix; shared by the
/// one-shot fit and the cross-validation path (which reuses the whitening
/// and warm-starts the solver).
inline CcaModel assemble_penalized(const Matrix& x, const Matrix& b, const NormalizedY& ny,
                                   const FitOptions& opts, const std::string& method,
                                   double rho, SolveTrace trace, bool row_sparse) {
  const Eigen::Index n = x.rows();
  CcaModel model;
  model.method = method;
  model.penalty_value = rho;
  model.requested_rank = opts.rank;
  model.trace = std::move(trace);

  SvdTriple svd;
  if (row_sparse) {
    std::vector<int> support;
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      if (b.row(j).norm() > 0.0) support.push_back(static_cast<int>(j));
    }
    if (support.empty()) {
      throw EmptyModelError("penalized fit: empty support at rho = " + std::to_string(rho),
                            rho);
    }
    Matrix x_s(n, support.size());
    Matrix b_s(support.size(), b.cols());
    for (std::size_t i = 0; i < support.size(); ++i) {
      x_s.col(i) = x.col(support[i]);
      b_s.row(i) = b.row(support[i]);
    }
    const Matrix sigma_s = sample_covariance(x_s, false);
    const int r_max = static_cast<int>(std::min<Eigen::Index>(x_s.cols(), b.cols()));
    svd = top_r_svd(sym_sqrt(sigma_s) * b_s, std::min(opts.rank, r_max));
    model.support = std::move(support);
  } else {
    // Dense B: (X B)/sqrt(n) shares singular values and right singular
    // vectors with Sigma_X^{1/2} B (equal Gram matrices), and avoids the
    // p x p square root.
    const Matrix whitened_fit = (x * b) / std::sqrt(static_cast<double>(n));
    const int r_max = static_cast<int>(std::min<Eigen::Index>(whitened_fit.rows(), b.cols()));
    svd = top_r_svd(whitened_fit, std::min(opts.rank, r_max));
  }

  const int r_eff = effective_rank(svd.singulars);
  if (r_eff == 0) {
    throw EmptyModelError("penalized fit: all canonical correlations collapsed at rho = " +
                              std::to_string(rho),
                          rho);
  }
  model.rank_reduced = r_eff < opts.rank;
  model.correlations = svd.singulars.head(r_eff);
  model.v = ny.inv_sqrt * svd.right.leftCols(r_eff);
  model.u = b * svd.right.leftCols(r_eff) * model.correlations.cwiseInverse().asDiagonal();
  const Matrix xu = x * model.u;
  model.gram_u = xu.transpose() * xu / static_cast<double>(n);
  return model;
}

struct PenaltySolve {
  Matrix b;
  SolveTrace trace;
  std::string method;
  bool row_sparse = false;
};

inline PenaltySolve solve_penalty(const Matrix& x, const Matrix& y0, const Penalty& penalty,
                                  const AdmmConfig& admm, const WarmStart* warm,
                                  WarmStart* warm_out) {
  PenaltySolve out;
  if (const auto* sp = std::get_if<SparsePenalty>(&penalty)) {
    AdmmConfig cfg = admm;
    cfg.rho = sp->rho;
    auto res = solve_sparse_l21(x, y0, cfg, warm);
    if (warm_out) *warm_out = WarmStart{res.b_iterate, res.b, res.dual};
    out = {std::move(res.b), std::move(res.trace), "sparse", true};
  } else if (const auto* gp = std::get_if<GroupPenalty>(&penalty)) {
    AdmmConfig cfg = admm;
    cfg.rho = gp->rho;
    auto res = solve_group_l21(x, y0, gp->groups, cfg, warm);
    if (warm_out) *warm_out = WarmStart{res.b_iterate, res.b, res.dual};
    out = {std::move(res.b), std::move(res.trace), "group", true};
  } else if (const auto* tp = std::get_if<GraphPenalty>(&penalty)) {
    if (!tp->graph) throw InvalidInputError("graph penalty: missing graph");
    AdmmConfig cfg = admm;
    cfg.rho = tp->rho;
    auto res = solve_graph_tv(x, y0, *tp->graph, cfg, warm);
    if (warm_out) *warm_out = WarmStart{res.theta_iterate, res.theta, res.theta_dual};
    out = {std::move(res.b), std::move(res.trace), "graph", false};
  } else if (const auto* rp = std::get_if<RidgePenalty>(&penalty)) {
    const Matrix kernel =
        rp->kernel ? *rp->kernel : Matrix(Matrix::Identity(x.cols(), x.cols()));
    out.b = solve_ridge(x, y0, kernel, rp->rho);
    out.method = "ridge";
    out.row_sparse = false;
  } else {
    throw InvalidInputError("fit_cca_penalized: penalty must be sparse, group, graph or ridge");
  }
  return out;
}

}  // namespace detail

/// Penalized CCA: whiten Y, run the matching penalized regression, then
/// recover directions from the support-restricted SVD (row-sparse
/// penalties) or the whitened-fit SVD (dense penalties).
/// U is always recovered as B V0 Lambda^{-1}; rows off the support are
/// exactly zero for the sparse and group penalties.
inline CcaModel fit_cca_penalized(const Matrix& x_in, const Matrix& y_in,
                                  const FitOptions& opts) {
  opts.validate(y_in.cols());
  if (x_in.rows() != y_in.rows()) {
    throw DimensionMismatchError("fit_cca_penalized: X and Y row counts differ");
  }
  if (std::holds_alternative<NoPenalty>(opts.penalty)) {
    throw InvalidInputError("fit_cca_penalized: no penalty set; use fit_cca_rrr");
  }
  const Matrix x = opts.center ? detail::center_columns(x_in) : x_in;
  const Matrix y = opts.center ? detail::center_columns(y_in) : y_in;

  const NormalizedY ny = normalize_y(y, opts.shrink_sigma_y, false, opts.rank_tol);
  auto solved = detail::solve_penalty(x, ny.y0, opts.penalty, opts.admm, nullptr, nullptr);
  return detail::assemble_penalized(x, solved.b, ny, opts, solved.method,
                                    penalty_rho(opts.penalty), std::move(solved.trace),
                                    solved.row_sparse);
}

/// Classical CCA through the SVD of Sigma_X^{-1/2} Sigma_XY Sigma_Y^{-1/2};
/// the low-dimensional testing oracle for the RRR route.
inline CcaModel cca_gep_oracle(const Matrix& x_in, const Matrix& y_in, int r,
                               bool center = false, double rank_tol = kRankTol) {
  if (x_in.rows() != y_in.rows()) {
    throw DimensionMismatchError("cca_gep_oracle: X and Y row counts differ");
  }
  if (r < 1 || r > std::min(x_in.cols(), y_in.cols())) {
    throw InvalidInputError("cca_gep_oracle: rank out of range");
  }
  const Matrix x = center ? detail::center_columns(x_in) : x_in;
  const Matrix y = center ? detail::center_columns(y_in) : y_in;

  const Matrix sigma_x = sample_covariance(x, false);
  const Matrix sigma_y = sample_covariance(y, false);
  Eigen::SelfAdjointEigenSolver<Matrix> ex(sigma_x, Eigen::EigenvaluesOnly);
  Eigen::SelfAdjointEigenSolver<Matrix> ey(sigma_y, Eigen::EigenvaluesOnly);
  if (ex.eigenvalues().minCoeff() <= rank_tol * std::max(ex.eigenvalues().maxCoeff(), 0.0)) {
    throw RankDeficientError("cca_gep_oracle: Sigma_X is rank deficient");
  }
  if (ey.eigenvalues().minCoeff() <= rank_tol * std::max(ey.eigenvalues().maxCoeff(), 0.0)) {
    throw RankDeficientError("cca_gep_oracle: Sigma_Y is rank deficient");
  }
  const Matrix sx_inv_sqrt = sym_inv_sqrt(sigma_x, rank_tol);
  const Matrix sy_inv_sqrt = sym_inv_sqrt(sigma_y, rank_tol);
  const Matrix target = sx_inv_sqrt * cross_covariance(x, y, false) * sy_inv_sqrt;
  const auto svd = top_r_svd(target, r);

  CcaModel model;
  model.method = "gep_oracle";
  model.requested_rank = r;
  model.correlations = svd.singulars;
  model.u = sx_inv_sqrt * svd.left;
  model.v = sy_inv_sqrt * svd.right;
  model.gram_u = model.u.transpose() * sigma_x * model.u;
  return model;
}

/// Canonical variates (X U, Y V); plain matrix products, no re-normalization.
inline std::pair<Matrix, Matrix> canonical_variates(const CcaModel& model, const Matrix& x,
                                                    const Matrix& y) {
  if (x.cols() != model.u.rows() || y.cols() != model.v.rows()) {
    throw DimensionMismatchError("canonical_variates: direction/data dimensions disagree");
  }
  if (x.rows() != y.rows()) {
    throw DimensionMismatchError("canonical_variates: X and Y row counts differ");
  }
  return {x * model.u, y * model.v};
}

}  // namespace rrcca
