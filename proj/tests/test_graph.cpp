#include <catch2/catch.hpp>

#include "oracles.hpp"
#include "rrcca/graph.hpp"
#include "rrcca/rng.hpp"

using rrcca::Matrix;

namespace {

Matrix degree_minus_adjacency(const rrcca::GraphStructure& g) {
  Matrix l = Matrix::Zero(g.p, g.p);
  for (const auto& [a, b] : g.edges) {
    l(a, a) += 1.0;
    l(b, b) += 1.0;
    l(a, b) -= 1.0;
    l(b, a) -= 1.0;
  }
  return l;
}

rrcca::GraphStructure random_graph(rrcca::Rng& rng, int max_p) {
  const int p = 2 + static_cast<int>(rng.uniform_index(max_p - 1));
  std::vector<std::pair<int, int>> edges;
  for (int a = 0; a < p; ++a) {
    for (int b = a + 1; b < p; ++b) {
      if (rng.uniform() < 0.15) edges.emplace_back(a, b);
    }
  }
  return rrcca::build_graph(p, edges);
}

}  // namespace

TEST_CASE("single edge graph", "[graph]") {
  const auto g = rrcca::build_graph(2, {{0, 1}});
  REQUIRE(g.edge_count() == 1);
  REQUIRE(g.incidence(0, 0) == 1.0);
  REQUIRE(g.incidence(0, 1) == -1.0);
  Matrix l(2, 2);
  l << 1, -1, -1, 1;
  REQUIRE((g.laplacian - l).norm() < 1e-14);
  REQUIRE((g.projector - Matrix::Constant(2, 2, 0.5)).norm() < 1e-14);
  REQUIRE(g.component_count() == 1);
}

TEST_CASE("edgeless graph", "[graph]") {
  const auto g = rrcca::build_graph(3, {});
  REQUIRE(g.incidence.rows() == 0);
  REQUIRE(g.incidence.cols() == 3);
  REQUIRE((g.projector - Matrix::Identity(3, 3)).norm() < 1e-14);
  REQUIRE(g.component_count() == 3);
  const auto sc = rrcca::spectral_constants(g);
  REQUIRE_FALSE(sc.kappa2.has_value());
}

TEST_CASE("path graph identities", "[graph]") {
  const auto g = rrcca::build_graph(4, {{0, 1}, {1, 2}, {2, 3}});
  const Matrix recomposed = g.projector + g.incidence_pinv * g.incidence;
  REQUIRE((recomposed - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-10);
  REQUIRE((g.incidence * g.projector).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("grid graph", "[graph]") {
  REQUIRE(rrcca::grid_graph(1, 1).edge_count() == 0);
  REQUIRE(rrcca::grid_graph(2, 2).edge_count() == 4);
  const auto g = rrcca::grid_graph(3, 5);
  REQUIRE(g.edge_count() == 3 * 4 + 5 * 2);
  REQUIRE(g.component_count() == 1);
}

TEST_CASE("knn graph", "[graph]") {
  SECTION("three collinear points") {
    Matrix pts(3, 1);
    pts << 0.0, 1.0, 2.1;
    const auto g = rrcca::knn_graph(pts, 1);
    REQUIRE(g.edges == std::vector<std::pair<int, int>>{{0, 1}, {1, 2}});
  }
  SECTION("unit square corners with distance ties") {
    Matrix pts(4, 2);
    pts << 0, 0, 1, 0, 0, 1, 1, 1;
    const auto g = rrcca::knn_graph(pts, 1);
    REQUIRE(g.edge_count() <= 4);
    // Ties break toward the lower index: node 0 links to 1 (not 2), node 3 to 1.
    for (const auto& [a, b] : g.edges) {
      REQUIRE((pts.row(a) - pts.row(b)).norm() == Approx(1.0));
    }
    REQUIRE(std::count(g.edges.begin(), g.edges.end(), std::make_pair(0, 1)) == 1);
    REQUIRE(std::count(g.edges.begin(), g.edges.end(), std::make_pair(1, 3)) == 1);
  }
  SECTION("k = n - 1 gives the complete graph") {
    rrcca::Rng rng(3);
    const Matrix pts = oracles::random_matrix(rng, 5, 2);
    REQUIRE(rrcca::knn_graph(pts, 4).edge_count() == 10);
  }
  SECTION("k >= n rejected") {
    REQUIRE_THROWS_AS(rrcca::knn_graph(Matrix::Zero(3, 2), 3), rrcca::InvalidInputError);
  }
}

TEST_CASE("spectral constants", "[graph]") {
  SECTION("single edge") {
    const auto sc = rrcca::spectral_constants(rrcca::build_graph(2, {{0, 1}}));
    REQUIRE(sc.kappa2.value() == Approx(2.0).margin(1e-12));
    REQUIRE(sc.sigma_max_l == Approx(2.0).margin(1e-12));
  }
  SECTION("complete graph on three nodes") {
    const auto sc = rrcca::spectral_constants(rrcca::build_graph(3, {{0, 1}, {0, 2}, {1, 2}}));
    REQUIRE(sc.kappa2.value() == Approx(3.0).margin(1e-12));
    REQUIRE(sc.sigma_max_l == Approx(3.0).margin(1e-12));
  }
  SECTION("4x4 grid against a dense eigensolver") {
    const auto g = rrcca::grid_graph(4, 4);
    const auto sc = rrcca::spectral_constants(g);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(degree_minus_adjacency(g));
    const auto& lam = eig.eigenvalues();
    double kappa2 = 0.0;
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
      if (lam(i) > 1e-9) {
        kappa2 = lam(i);
        break;
      }
    }
    REQUIRE(sc.kappa2.value() == Approx(kappa2).margin(1e-9));
    REQUIRE(sc.sigma_max_l == Approx(lam.maxCoeff()).margin(1e-9));
  }
}

TEST_CASE("graph invariants on random graphs", "[graph]") {
  rrcca::Rng rng(99);
  for (int rep = 0; rep < 15; ++rep) {
    const auto g = random_graph(rng, 20);
    const int p = g.p;

    // Laplacian is degree minus adjacency.
    REQUIRE((g.laplacian - degree_minus_adjacency(g)).cwiseAbs().maxCoeff() < 1e-10);

    // Projector identities.
    REQUIRE((g.projector * g.projector - g.projector).cwiseAbs().maxCoeff() < 1e-10);
    REQUIRE(g.projector.trace() == Approx(g.component_count()).margin(1e-10));
    if (g.edge_count() > 0) {
      REQUIRE((g.incidence * g.projector).cwiseAbs().maxCoeff() < 1e-10);
      REQUIRE((g.projector + g.incidence_pinv * g.incidence - Matrix::Identity(p, p))
                  .cwiseAbs()
                  .maxCoeff() < 1e-8);

      // rank(incidence) = p - n_c.
      const auto sv = oracles::full_svd_singulars(g.incidence);
      int rank = 0;
      for (Eigen::Index i = 0; i < sv.size(); ++i) rank += sv(i) > 1e-9 * sv(0);
      REQUIRE(rank == p - g.component_count());

      const auto sc = rrcca::spectral_constants(g);
      int dmax = 0;
      {
        std::vector<int> deg(p, 0);
        for (const auto& [a, b] : g.edges) {
          ++deg[a];
          ++deg[b];
        }
        dmax = *std::max_element(deg.begin(), deg.end());
      }
      REQUIRE(sc.sigma_max_l <= 2.0 * dmax + 1e-9);

      const Matrix b = oracles::random_matrix(rng, p, 3);
      REQUIRE((g.incidence * b).squaredNorm() <= sc.sigma_max_l * b.squaredNorm() + 1e-9);
    }
  }
}

TEST_CASE("edge orientation does not matter downstream", "[graph]") {
  const auto g1 = rrcca::build_graph(4, {{0, 1}, {1, 2}, {0, 3}});
  const auto g2 = rrcca::build_graph(4, {{1, 0}, {2, 1}, {3, 0}});  // reversed input
  REQUIRE((g1.laplacian - g2.laplacian).norm() < 1e-14);
  REQUIRE((g1.projector - g2.projector).norm() < 1e-14);
  rrcca::Rng rng(5);
  const Matrix b = oracles::random_matrix(rng, 4, 2);
  REQUIRE(oracles::l21_norm(g1.incidence * b) ==
          Approx(oracles::l21_norm(g2.incidence * b)).margin(1e-12));
}

TEST_CASE("graph validation", "[graph]") {
  REQUIRE_THROWS_AS(rrcca::build_graph(3, {{0, 0}}), rrcca::InvalidGraphError);
  REQUIRE_THROWS_AS(rrcca::build_graph(3, {{0, 3}}), rrcca::InvalidGraphError);
  REQUIRE_THROWS_AS(rrcca::build_graph(3, {{0, 1}, {1, 0}}), rrcca::InvalidGraphError);
}
