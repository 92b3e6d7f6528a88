#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rrcca/errors.hpp"
#include "rrcca/matrix_kernels.hpp"

namespace rrcca {

/// A fixed graph over the p covariates together with the cached linear
/// operators the total-variation penalty needs: oriented incidence matrix,
/// its pseudo-inverse, the Laplacian, and the projector onto the
/// connected-component indicator space. Immutable after construction.
struct GraphStructure {
  int p = 0;
  std::vector<std::pair<int, int>> edges;  // 0-based, first < second
  Matrix incidence;                        // m x p, one +1/-1 pair per row
  Matrix incidence_pinv;                   // p x m
  Matrix laplacian;                        // p x p, Gamma' * Gamma
  Matrix projector;                        // p x p, componentwise averaging
  std::vector<std::vector<int>> components;
  std::vector<int> component_of;           // node -> component index

  int edge_count() const { return static_cast<int>(edges.size()); }
  int component_count() const { return static_cast<int>(components.size()); }
};

namespace detail {

class UnionFind {
 public:
  explicit UnionFind(int n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  int find(int x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(int a, int b) { parent_[find(a)] = find(b); }

 private:
  std::vector<int> parent_;
};

}  // namespace detail

/// Builds the graph and all derived operators. Edges may be given in either
/// orientation; rows of the incidence matrix are normalized to +1 at the
/// lower index and -1 at the higher one. The edge order of the input is
/// preserved.
inline GraphStructure build_graph(int p, const std::vector<std::pair<int, int>>& edges) {
  if (p < 1) throw InvalidGraphError("build_graph: node count must be positive");
  GraphStructure g;
  g.p = p;
  g.edges.reserve(edges.size());
  std::set<std::pair<int, int>> seen;
  for (const auto& [a, b] : edges) {
    if (a < 0 || a >= p || b < 0 || b >= p) {
      throw InvalidGraphError("build_graph: edge endpoint out of range");
    }
    if (a == b) throw InvalidGraphError("build_graph: self-loop not allowed");
    const auto e = std::minmax(a, b);
    if (!seen.insert(e).second) throw InvalidGraphError("build_graph: duplicate edge");
    g.edges.emplace_back(e.first, e.second);
  }

  const int m = g.edge_count();
  g.incidence = Matrix::Zero(m, p);
  detail::UnionFind uf(p);
  for (int i = 0; i < m; ++i) {
    g.incidence(i, g.edges[i].first) = 1.0;
    g.incidence(i, g.edges[i].second) = -1.0;
    uf.unite(g.edges[i].first, g.edges[i].second);
  }

  g.component_of.assign(p, -1);
  for (int v = 0; v < p; ++v) {
    const int root = uf.find(v);
    if (g.component_of[root] < 0) {
      g.component_of[root] = static_cast<int>(g.components.size());
      g.components.emplace_back();
    }
    g.component_of[v] = g.component_of[root];
    g.components[g.component_of[v]].push_back(v);
  }

  g.laplacian = detail::symmetrize(g.incidence.transpose() * g.incidence);
  g.incidence_pinv = m > 0 ? pseudo_inverse(g.incidence) : Matrix::Zero(p, 0);

  // Closed-form projector from the components; the identity
  // Pi = I - Gamma^dagger * Gamma is checked in tests instead of being used
  // as the definition, which would amplify pseudo-inverse error.
  g.projector = Matrix::Zero(p, p);
  for (const auto& comp : g.components) {
    const double w = 1.0 / static_cast<double>(comp.size());
    for (int a : comp) {
      for (int b : comp) g.projector(a, b) = w;
    }
  }
  return g;
}

/// 4-neighbor lattice on rows x cols nodes, row-major node numbering.
inline GraphStructure grid_graph(int rows, int cols) {
  if (rows < 1 || cols < 1) throw InvalidGraphError("grid_graph: empty grid");
  std::vector<std::pair<int, int>> edges;
  edges.reserve(static_cast<std::size_t>(rows) * (cols - 1) +
                static_cast<std::size_t>(cols) * (rows - 1));
  auto id = [cols](int r, int c) { return r * cols + c; };
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (c + 1 < cols) edges.emplace_back(id(r, c), id(r, c + 1));
      if (r + 1 < rows) edges.emplace_back(id(r, c), id(r + 1, c));
    }
  }
  std::sort(edges.begin(), edges.end());
  return build_graph(rows * cols, edges);
}

/// Symmetrized k-nearest-neighbor graph of the given points (rows of
/// coords). Distance ties are broken by the lower node index.
inline GraphStructure knn_graph(const Matrix& coords, int k) {
  const int n = static_cast<int>(coords.rows());
  if (n < 1) throw InvalidInputError("knn_graph: no points");
  if (k < 1 || k >= n) throw InvalidInputError("knn_graph: k must be in [1, n-1]");
  std::set<std::pair<int, int>> edge_set;
  std::vector<std::pair<double, int>> cand;
  cand.reserve(n - 1);
  for (int i = 0; i < n; ++i) {
    cand.clear();
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      cand.emplace_back((coords.row(i) - coords.row(j)).squaredNorm(), j);
    }
    std::sort(cand.begin(), cand.end());
    for (int t = 0; t < k; ++t) {
      edge_set.insert(std::minmax(i, cand[t].second));
    }
  }
  return build_graph(n, {edge_set.begin(), edge_set.end()});
}

struct SpectralConstants {
  std::optional<double> kappa2;  // smallest nonzero Laplacian eigenvalue
  double sigma_max_l = 0.0;      // largest Laplacian eigenvalue
  double rho_gamma = 0.0;        // max column norm of Gamma^dagger
};

/// Diagnostics used by the theory-facing tests; kappa2 is absent for an
/// edgeless graph.
inline SpectralConstants spectral_constants(const GraphStructure& g,
                                            double rank_tol = kRankTol) {
  SpectralConstants out;
  if (g.edge_count() == 0) return out;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(g.laplacian, Eigen::EigenvaluesOnly);
  const Vector& lam = eig.eigenvalues();
  out.sigma_max_l = lam.maxCoeff();
  const double cut = rank_tol * std::max(out.sigma_max_l, 1.0);
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    if (lam(i) > cut) {
      out.kappa2 = lam(i);
      break;
    }
  }
  for (Eigen::Index j = 0; j < g.incidence_pinv.cols(); ++j) {
    out.rho_gamma = std::max(out.rho_gamma, g.incidence_pinv.col(j).norm());
  }
  return out;
}

}  // namespace rrcca
