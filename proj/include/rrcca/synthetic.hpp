#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "rrcca/errors.hpp"
#include "rrcca/graph.hpp"
#include "rrcca/matrix_kernels.hpp"
#include "rrcca/rng.hpp"

namespace rrcca {

enum class Signal { High, Medium, Low };
enum class Regime { Sparse, Group, Graph };

inline std::string to_string(Signal s) {
  switch (s) {
    case Signal::High: return "high";
    case Signal::Medium: return "medium";
    default: return "low";
  }
}

inline std::string to_string(Regime r) {
  switch (r) {
    case Regime::Sparse: return "sparse";
    case Regime::Group: return "group";
    default: return "graph";
  }
}

struct SimConfig {
  Regime regime = Regime::Sparse;
  int n = 500;
  int p = 100;
  int q = 30;
  int r = 3;
  int r_pca = 5;   // rank of the structured Sigma_X block
  int p1 = 20;     // size of the structured block
  int n_nnz = 10;  // sparse regime: nonzero rows of U*
  int group_size = 10;
  int active_groups = 5;
  int grid_rows = 10;
  int grid_cols = 10;
  int edge_support = 5;  // graph regime: nonzero rows of the edge-space draw
  Signal signal = Signal::High;
  std::uint64_t seed = 0;
  double ridge_eps = 0.0;  // adds eps*I to both covariance blocks

  void validate() const {
    if (n < 1 || p < 1 || q < 1) throw InvalidInputError("SimConfig: sizes must be positive");
    if (r < 1 || r > q) throw InvalidInputError("SimConfig: need 1 <= r <= q");
    if (regime == Regime::Sparse && (n_nnz < 1 || n_nnz > p)) {
      throw InvalidInputError("SimConfig: need 1 <= n_nnz <= p");
    }
    if (r_pca < 1 || r_pca > p1 || p1 > p) {
      throw InvalidInputError("SimConfig: need 1 <= r_pca <= p1 <= p");
    }
    if (regime == Regime::Group && (group_size < 1 || active_groups < 1)) {
      throw InvalidInputError("SimConfig: invalid group layout");
    }
    if (regime == Regime::Graph) {
      if (grid_rows < 1 || grid_cols < 1) throw InvalidInputError("SimConfig: empty grid");
      if (grid_rows * grid_cols != p) {
        throw InvalidInputError("SimConfig: grid size must equal p");
      }
      if (edge_support < 1) throw InvalidInputError("SimConfig: edge_support must be >= 1");
    }
    if (ridge_eps < 0.0) throw InvalidInputError("SimConfig: ridge_eps must be >= 0");
  }
};

/// The canonical-pair covariance model and its generating directions; the
/// reference for every recovery metric. All invariants are enforced at
/// construction.
struct GroundTruth {
  Matrix sigma_x, sigma_y, sigma_xy;
  Matrix u_star, v_star;
  Vector lambda_star;
  std::vector<int> u_support;  // nonzero rows of u_star
  std::shared_ptr<const GraphStructure> graph;  // set for the graph regime
  int gamma_support = -1;  // realized |supp(Gamma U*)|, graph regime only
};

/// r correlations equally spaced (endpoints included) across the interval
/// for the requested strength, in decreasing order; r = 1 gives the
/// midpoint.
inline Vector signal_lambdas(Signal strength, int r) {
  if (r < 1) throw InvalidInputError("signal_lambdas: r must be >= 1");
  double lo = 0.35, hi = 0.5;
  if (strength == Signal::High) {
    lo = 0.75;
    hi = 0.9;
  } else if (strength == Signal::Medium) {
    lo = 0.55;
    hi = 0.7;
  }
  Vector out(r);
  if (r == 1) {
    out(0) = 0.5 * (lo + hi);
    return out;
  }
  const double step = (hi - lo) / static_cast<double>(r - 1);
  for (int i = 0; i < r; ++i) out(i) = hi - step * i;
  return out;
}

namespace detail {

inline Matrix random_uniform(Rng& rng, int rows, int cols) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
  }
  return m;
}

inline Matrix random_gaussian(Rng& rng, int rows, int cols) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

inline Matrix random_orthonormal_columns(Rng& rng, int rows, int cols) {
  Eigen::HouseholderQR<Matrix> qr(random_gaussian(rng, rows, cols));
  Matrix q = qr.householderQ() * Matrix::Identity(rows, cols);
  return q;
}

/// Sigma_X = blockdiag(U_X U_X', I) + eps I with a random orthonormal U_X:
/// the leading principal components are spanned by the first p1 covariates
/// only. The block makes Sigma_X singular when eps = 0; sampling goes
/// through the symmetric square root, which handles the degenerate case.
inline Matrix structured_sigma_x(Rng& rng, const SimConfig& cfg) {
  Matrix sigma = Matrix::Identity(cfg.p, cfg.p);
  const Matrix ux = random_orthonormal_columns(rng, cfg.p1, cfg.r_pca);
  sigma.topLeftCorner(cfg.p1, cfg.p1) = ux * ux.transpose();
  sigma.diagonal().array() += cfg.ridge_eps;
  return detail::symmetrize(sigma);
}

struct YCovariance {
  Matrix sigma;        // U_Y U_Y' (+ eps I)
  Matrix range_basis;  // orthonormal basis of range(U_Y U_Y'), q x r_y
};

/// Sigma_Y = U_Y U_Y' with a random orthonormal U_Y, rank-deficient when
/// r_pca < q. The range basis is kept so V* can be drawn inside it: the data
/// distribution only determines V through V' Sigma_Y, so components in the
/// null space would be unrecoverable by any estimator and would put an
/// artificial floor under every subspace-distance benchmark.
inline YCovariance structured_sigma_y(Rng& rng, const SimConfig& cfg) {
  const int ry = std::min(cfg.r_pca, cfg.q);
  YCovariance out;
  if (ry >= cfg.q) {
    out.sigma = Matrix::Identity(cfg.q, cfg.q);
    out.range_basis = Matrix::Identity(cfg.q, cfg.q);
  } else {
    out.range_basis = random_orthonormal_columns(rng, cfg.q, ry);
    out.sigma = out.range_basis * out.range_basis.transpose();
  }
  out.sigma.diagonal().array() += cfg.ridge_eps;
  out.sigma = detail::symmetrize(out.sigma);
  return out;
}

/// Normalizes W so that W' S W = I_r via the Gram inverse square root;
/// right-multiplication keeps the row support intact. Returns false when
/// the Gram matrix is numerically singular (caller resamples).
inline bool gram_normalize(Matrix& w, const Matrix& s, double rank_tol = 1e-8) {
  const Matrix gram = detail::symmetrize(w.transpose() * s * w);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  const double lmax = eig.eigenvalues().maxCoeff();
  if (lmax <= 0.0 || eig.eigenvalues().minCoeff() <= rank_tol * lmax) return false;
  w = w * sym_inv_sqrt(gram);
  return true;
}

inline std::vector<int> nonzero_rows(const Matrix& m, double tol = 1e-10) {
  std::vector<int> rows;
  for (Eigen::Index j = 0; j < m.rows(); ++j) {
    if (m.row(j).norm() > tol) rows.push_back(static_cast<int>(j));
  }
  return rows;
}

inline bool joint_psd_ok(const GroundTruth& gt, double tol = 1e-8) {
  const Eigen::Index p = gt.sigma_x.rows(), q = gt.sigma_y.rows();
  Matrix joint(p + q, p + q);
  joint.topLeftCorner(p, p) = gt.sigma_x;
  joint.topRightCorner(p, q) = gt.sigma_xy;
  joint.bottomLeftCorner(q, p) = gt.sigma_xy.transpose();
  joint.bottomRightCorner(q, q) = gt.sigma_y;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(detail::symmetrize(joint), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff() >= -tol * std::max(eig.eigenvalues().maxCoeff(), 1.0);
}

/// Draws U*/V* for the given regime, normalizes both against the covariance
/// blocks, assembles Sigma_XY and verifies joint positive
/// semi-definiteness. Draw rejection (singular Gram or PSD failure) retries
/// with fresh randomness, up to the attempt cap.
template <typename DrawU>
GroundTruth assemble_model(const SimConfig& cfg, Rng& rng, DrawU&& draw_u) {
  GroundTruth gt;
  gt.sigma_x = structured_sigma_x(rng, cfg);
  const YCovariance ycov = structured_sigma_y(rng, cfg);
  gt.sigma_y = ycov.sigma;
  gt.lambda_star = signal_lambdas(cfg.signal, cfg.r);

  constexpr int kMaxAttempts = 100;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Matrix u = draw_u(rng);
    Matrix v = ycov.range_basis *
               random_uniform(rng, static_cast<int>(ycov.range_basis.cols()), cfg.r);
    if (!gram_normalize(u, gt.sigma_x)) continue;
    if (!gram_normalize(v, gt.sigma_y)) continue;
    gt.u_star = std::move(u);
    gt.v_star = std::move(v);
    gt.sigma_xy = gt.sigma_x * gt.u_star * gt.lambda_star.asDiagonal() *
                  gt.v_star.transpose() * gt.sigma_y;
    if (!joint_psd_ok(gt)) continue;
    gt.u_support = nonzero_rows(gt.u_star);
    return gt;
  }
  throw GenerationFailedError("synthetic model generation failed after 100 attempts");
}

}  // namespace detail

/// Sparse regime: U* has uniformly random entries on a uniformly random
/// support of n_nnz rows.
inline GroundTruth gen_sparse_model(const SimConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.regime != Regime::Sparse) throw InvalidInputError("gen_sparse_model: wrong regime");
  return detail::assemble_model(cfg, rng, [&cfg](Rng& r) {
    Matrix u = Matrix::Zero(cfg.p, cfg.r);
    const auto rows = r.sample_without_replacement(cfg.p, cfg.n_nnz);
    for (int row : rows) {
      for (int j = 0; j < cfg.r; ++j) u(row, j) = r.uniform(-1.0, 1.0);
    }
    return u;
  });
}

/// Group regime: the support is the union of active_groups randomly chosen
/// contiguous groups of group_size rows (the last group may be short).
inline GroundTruth gen_group_model(const SimConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.regime != Regime::Group) throw InvalidInputError("gen_group_model: wrong regime");
  const int n_groups = (cfg.p + cfg.group_size - 1) / cfg.group_size;
  if (cfg.active_groups > n_groups) {
    throw InvalidInputError("gen_group_model: more active groups than groups");
  }
  return detail::assemble_model(cfg, rng, [&cfg, n_groups](Rng& r) {
    Matrix u = Matrix::Zero(cfg.p, cfg.r);
    const auto active = r.sample_without_replacement(n_groups, cfg.active_groups);
    for (int g : active) {
      const int lo = g * cfg.group_size;
      const int hi = std::min(cfg.p, lo + cfg.group_size);
      for (int row = lo; row < hi; ++row) {
        for (int j = 0; j < cfg.r; ++j) u(row, j) = r.uniform(-1.0, 1.0);
      }
    }
    return u;
  });
}

/// Contiguous group partition matching gen_group_model's layout, usable as
/// the known partition handed to the group-penalized estimator.
inline std::vector<std::vector<int>> contiguous_groups(int p, int group_size) {
  if (p < 1 || group_size < 1) throw InvalidInputError("contiguous_groups: bad sizes");
  std::vector<std::vector<int>> groups;
  for (int lo = 0; lo < p; lo += group_size) {
    std::vector<int> g;
    for (int j = lo; j < std::min(p, lo + group_size); ++j) g.push_back(j);
    groups.push_back(std::move(g));
  }
  return groups;
}

/// Graph regime: a sparse edge-space draw is mapped through the incidence
/// pseudo-inverse, so Gamma U* is (approximately) row-sparse and Pi U* = 0
/// before normalization. The realized |supp(Gamma U*)| is recorded, not
/// asserted: Gamma Gamma^dagger is a projection and need not preserve the
/// drawn sparsity exactly.
inline GroundTruth gen_graph_model(const SimConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.regime != Regime::Graph) throw InvalidInputError("gen_graph_model: wrong regime");
  auto graph = std::make_shared<GraphStructure>(grid_graph(cfg.grid_rows, cfg.grid_cols));
  const int m = graph->edge_count();
  if (m < 1) throw InvalidInputError("gen_graph_model: grid has no edges");
  const int support = std::min(cfg.edge_support, m);

  GroundTruth gt = detail::assemble_model(cfg, rng, [&cfg, &graph, m, support](Rng& r) {
    Matrix u_edge = Matrix::Zero(m, cfg.r);
    const auto rows = r.sample_without_replacement(m, support);
    for (int row : rows) {
      for (int j = 0; j < cfg.r; ++j) u_edge(row, j) = r.uniform(-1.0, 1.0);
    }
    return Matrix(graph->incidence_pinv * u_edge);
  });
  gt.gamma_support =
      static_cast<int>(detail::nonzero_rows(graph->incidence * gt.u_star).size());
  gt.graph = std::move(graph);
  return gt;
}

inline GroundTruth generate(const SimConfig& cfg, Rng& rng) {
  switch (cfg.regime) {
    case Regime::Sparse: return gen_sparse_model(cfg, rng);
    case Regime::Group: return gen_group_model(cfg, rng);
    default: return gen_graph_model(cfg, rng);
  }
}

/// n i.i.d. draws from N(0, joint Sigma) through the symmetric square root,
/// which stays valid for PSD-degenerate covariances. Row-major fill order:
/// one sample's normals are consumed before the next sample's.
inline std::pair<Matrix, Matrix> sample_joint(const GroundTruth& gt, int n, Rng& rng) {
  if (n < 1) throw InvalidInputError("sample_joint: n must be >= 1");
  const Eigen::Index p = gt.sigma_x.rows(), q = gt.sigma_y.rows();
  Matrix joint(p + q, p + q);
  joint.topLeftCorner(p, p) = gt.sigma_x;
  joint.topRightCorner(p, q) = gt.sigma_xy;
  joint.bottomLeftCorner(q, p) = gt.sigma_xy.transpose();
  joint.bottomRightCorner(q, q) = gt.sigma_y;
  const Matrix root = sym_sqrt(joint, 1e-6);

  Matrix z(n, p + q);
  for (int i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p + q; ++j) z(i, j) = rng.normal();
  }
  const Matrix xy = z * root;
  return {xy.leftCols(p), xy.rightCols(q)};
}

}  // namespace rrcca
