#include <catch2/catch.hpp>

#include "oracles.hpp"
#include "rrcca/admm.hpp"
#include "rrcca/graph.hpp"
#include "rrcca/rng.hpp"

using rrcca::AdmmConfig;
using rrcca::Matrix;
using rrcca::Vector;

namespace {

/// n x p design with X'X/n = I, for closed-form prox checks.
Matrix orthonormal_design(rrcca::Rng& rng, int n, int p) {
  const Matrix raw = oracles::random_matrix(rng, n, p);
  Eigen::HouseholderQR<Matrix> qr(raw);
  const Matrix q = qr.householderQ() * Matrix::Identity(n, p);
  return std::sqrt(static_cast<double>(n)) * q;
}

Matrix ols(const Matrix& x, const Matrix& y0) {
  return x.colPivHouseholderQr().solve(y0);
}

}  // namespace

TEST_CASE("row shrink", "[admm]") {
  Vector x(2);
  x << 3.0, 4.0;
  SECTION("boundary kills the row") { REQUIRE(rrcca::row_shrink(x, 5.0).isZero(0.0)); }
  SECTION("zero threshold is the identity") {
    REQUIRE((rrcca::row_shrink(x, 0.0) - x).norm() == 0.0);
  }
  SECTION("interior scaling") {
    const Vector got = rrcca::row_shrink(x, 2.5);
    REQUIRE(got(0) == Approx(1.5).margin(1e-15));
    REQUIRE(got(1) == Approx(2.0).margin(1e-15));
  }
  SECTION("zero vector stays zero for any threshold") {
    REQUIRE(rrcca::row_shrink(Vector::Zero(3), 0.7).isZero(0.0));
  }
  SECTION("firm nonexpansion") {
    rrcca::Rng rng(21);
    for (int rep = 0; rep < 50; ++rep) {
      const Vector a = oracles::random_matrix(rng, 4, 1);
      const Vector b = oracles::random_matrix(rng, 4, 1);
      const double t = rng.uniform(0.0, 2.0);
      REQUIRE((rrcca::row_shrink(a, t) - rrcca::row_shrink(b, t)).norm() <=
              (a - b).norm() + 1e-12);
    }
  }
}

TEST_CASE("sparse solver reduces to OLS at rho = 0", "[admm]") {
  rrcca::Rng rng(31);
  const Matrix x = oracles::random_matrix(rng, 30, 5);
  const Matrix y0 = oracles::random_matrix(rng, 30, 3);
  AdmmConfig cfg;
  cfg.rho = 0.0;
  cfg.eps = 1e-8;
  cfg.max_iter = 20000;
  const auto res = rrcca::solve_sparse_l21(x, y0, cfg);
  REQUIRE(res.trace.converged);
  REQUIRE((res.b - ols(x, y0)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("sparse solver matches the closed-form prox on orthonormal designs", "[admm]") {
  rrcca::Rng rng(37);
  const Matrix x = orthonormal_design(rng, 40, 6);
  const Matrix y0 = oracles::random_matrix(rng, 40, 2);
  const Matrix c = x.transpose() * y0 / 40.0;

  SECTION("rho at the zeroing threshold gives the zero solution") {
    AdmmConfig cfg;
    cfg.rho = rrcca::rho_max_sparse(x, y0);
    cfg.eps = 1e-9;
    cfg.max_iter = 20000;
    const auto res = rrcca::solve_sparse_l21(x, y0, cfg);
    REQUIRE(res.trace.converged);
    REQUIRE(res.b.cwiseAbs().maxCoeff() < 1e-8);
  }
  SECTION("interior rho matches rowwise shrinkage of X'Y0/n") {
    AdmmConfig cfg;
    cfg.rho = 0.6 * rrcca::rho_max_sparse(x, y0);
    cfg.eps = 1e-10;
    cfg.max_iter = 50000;
    const auto res = rrcca::solve_sparse_l21(x, y0, cfg);
    REQUIRE(res.trace.converged);
    for (int j = 0; j < 6; ++j) {
      const Vector want = rrcca::row_shrink(c.row(j).transpose(), cfg.rho / 2.0);
      REQUIRE((res.b.row(j).transpose() - want).norm() < 1e-6);
    }
  }
}

TEST_CASE("sparse solver objective matches the subgradient oracle", "[admm]") {
  rrcca::Rng rng(41);
  const Matrix x = oracles::random_matrix(rng, 40, 6);
  const Matrix y0 = oracles::random_matrix(rng, 40, 2);
  AdmmConfig cfg;
  cfg.rho = 0.3 * rrcca::rho_max_sparse(x, y0);
  cfg.eps = 1e-8;
  cfg.max_iter = 50000;
  const auto res = rrcca::solve_sparse_l21(x, y0, cfg);
  REQUIRE(res.trace.converged);
  const double got = oracles::objective_sparse(x, y0, res.b, cfg.rho);
  const double want = oracles::subgradient_sparse(x, y0, cfg.rho, 100000);
  REQUIRE(std::abs(got - want) < 1e-4 * std::abs(want));
}

TEST_CASE("sparse solver satisfies the stationarity conditions", "[admm]") {
  rrcca::Rng rng(43);
  const Matrix x = oracles::random_matrix(rng, 50, 8);
  const Matrix y0 = oracles::random_matrix(rng, 50, 3);
  AdmmConfig cfg;
  cfg.rho = 0.4 * rrcca::rho_max_sparse(x, y0);
  cfg.eps = 1e-8;
  cfg.max_iter = 100000;
  const auto res = rrcca::solve_sparse_l21(x, y0, cfg);
  REQUIRE(res.trace.converged);

  const double check_eps = 1e-6;
  const Matrix grad = 2.0 / 50.0 * (x.transpose() * (x * res.b - y0));
  bool saw_zero = false, saw_nonzero = false;
  for (int j = 0; j < 8; ++j) {
    const double nrm = res.b.row(j).norm();
    if (nrm > 0.0) {
      saw_nonzero = true;
      REQUIRE((grad.row(j) + cfg.rho * res.b.row(j) / nrm).norm() <= 10 * check_eps);
    } else {
      saw_zero = true;
      REQUIRE(0.5 * grad.row(j).norm() <= cfg.rho / 2.0 + 10 * check_eps);
    }
  }
  REQUIRE(saw_zero);
  REQUIRE(saw_nonzero);
}

TEST_CASE("objective history is monotone after burn-in", "[admm]") {
  rrcca::Rng rng(47);
  const Matrix x = oracles::random_matrix(rng, 60, 6);
  const Matrix y0 = oracles::random_matrix(rng, 60, 2);
  AdmmConfig cfg;
  cfg.rho = 0.2 * rrcca::rho_max_sparse(x, y0);
  cfg.record_objective = true;
  const auto res = rrcca::solve_sparse_l21(x, y0, cfg);
  const auto& hist = res.trace.objective_history;
  REQUIRE(hist.size() >= 6);
  for (std::size_t t = 5; t + 1 < hist.size(); ++t) {
    REQUIRE(hist[t + 1] <= hist[t] + 1e-8);
  }
}

TEST_CASE("solved objective is invariant to covariate permutation", "[admm]") {
  rrcca::Rng rng(53);
  const Matrix x = oracles::random_matrix(rng, 45, 7);
  const Matrix y0 = oracles::random_matrix(rng, 45, 2);
  AdmmConfig cfg;
  cfg.rho = 0.3 * rrcca::rho_max_sparse(x, y0);
  cfg.eps = 1e-9;
  cfg.max_iter = 50000;

  std::vector<int> perm{3, 0, 6, 1, 5, 2, 4};
  Matrix xp(45, 7);
  for (int j = 0; j < 7; ++j) xp.col(j) = x.col(perm[j]);

  const auto a = rrcca::solve_sparse_l21(x, y0, cfg);
  const auto b = rrcca::solve_sparse_l21(xp, y0, cfg);
  REQUIRE(oracles::objective_sparse(x, y0, a.b, cfg.rho) ==
          Approx(oracles::objective_sparse(xp, y0, b.b, cfg.rho)).margin(1e-8));
}

TEST_CASE("group solver with singleton groups equals the sparse solver", "[admm]") {
  rrcca::Rng rng(59);
  const Matrix x = oracles::random_matrix(rng, 35, 6);
  const Matrix y0 = oracles::random_matrix(rng, 35, 2);
  std::vector<std::vector<int>> singletons;
  for (int j = 0; j < 6; ++j) singletons.push_back({j});
  AdmmConfig cfg;
  cfg.rho = 0.25 * rrcca::rho_max_sparse(x, y0);
  const auto sparse = rrcca::solve_sparse_l21(x, y0, cfg);
  const auto group = rrcca::solve_group_l21(x, y0, singletons, cfg);
  REQUIRE((sparse.b - group.b).cwiseAbs().maxCoeff() < 1e-10);
  REQUIRE(rrcca::rho_max_group(x, y0, singletons) ==
          Approx(rrcca::rho_max_sparse(x, y0)).margin(1e-12));
}

TEST_CASE("group solver zeroes a whole-matrix group at large rho", "[admm]") {
  rrcca::Rng rng(61);
  const Matrix x = oracles::random_matrix(rng, 30, 5);
  const Matrix y0 = oracles::random_matrix(rng, 30, 2);
  std::vector<std::vector<int>> one_group{{0, 1, 2, 3, 4}};
  AdmmConfig cfg;
  cfg.rho = 2.0 * rrcca::rho_max_group(x, y0, one_group);
  const auto res = rrcca::solve_group_l21(x, y0, one_group, cfg);
  REQUIRE(res.b.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("group solver matches blockwise prox on orthonormal designs", "[admm]") {
  rrcca::Rng rng(67);
  const Matrix x = orthonormal_design(rng, 50, 6);
  const Matrix y0 = oracles::random_matrix(rng, 50, 3);
  std::vector<std::vector<int>> groups{{0, 1, 2}, {3, 4, 5}};
  AdmmConfig cfg;
  cfg.rho = 0.5 * rrcca::rho_max_group(x, y0, groups);
  cfg.eps = 1e-10;
  cfg.max_iter = 50000;
  const auto res = rrcca::solve_group_l21(x, y0, groups, cfg);
  REQUIRE(res.trace.converged);

  const Matrix c = x.transpose() * y0 / 50.0;
  for (const auto& g : groups) {
    Matrix block(g.size(), 3), got(g.size(), 3);
    for (std::size_t i = 0; i < g.size(); ++i) {
      block.row(i) = c.row(g[i]);
      got.row(i) = res.b.row(g[i]);
    }
    const double t = cfg.rho * std::sqrt(3.0) / 2.0;
    const double nrm = block.norm();
    const Matrix want = nrm <= t ? Matrix(Matrix::Zero(g.size(), 3))
                                 : Matrix((1.0 - t / nrm) * block);
    REQUIRE((got - want).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("group solver objective matches the subgradient oracle", "[admm]") {
  rrcca::Rng rng(71);
  const Matrix x = oracles::random_matrix(rng, 40, 8);
  const Matrix y0 = oracles::random_matrix(rng, 40, 2);
  std::vector<std::vector<int>> groups{{0, 1, 2}, {3, 4}, {5, 6, 7}};
  AdmmConfig cfg;
  cfg.rho = 0.3 * rrcca::rho_max_group(x, y0, groups);
  cfg.eps = 1e-8;
  cfg.max_iter = 50000;
  const auto res = rrcca::solve_group_l21(x, y0, groups, cfg);
  const double got = oracles::objective_group(x, y0, res.b, groups, cfg.rho);
  const double want = oracles::subgradient_group(x, y0, groups, cfg.rho, 100000);
  REQUIRE(std::abs(got - want) < 1e-4 * std::abs(want));
}

TEST_CASE("partition validation", "[admm]") {
  rrcca::Rng rng(73);
  const Matrix x = oracles::random_matrix(rng, 10, 4);
  const Matrix y0 = oracles::random_matrix(rng, 10, 2);
  AdmmConfig cfg;
  REQUIRE_THROWS_AS(rrcca::solve_group_l21(x, y0, {{0, 1}, {1, 2, 3}}, cfg),
                    rrcca::InvalidInputError);
  REQUIRE_THROWS_AS(rrcca::solve_group_l21(x, y0, {{0, 1}, {3}}, cfg),
                    rrcca::InvalidInputError);
  REQUIRE_THROWS_AS(rrcca::solve_group_l21(x, y0, {{0, 1, 2}, {3, 4}}, cfg),
                    rrcca::InvalidInputError);
}

TEST_CASE("graph solver on an edgeless graph is plain OLS", "[admm]") {
  rrcca::Rng rng(79);
  const Matrix x = oracles::random_matrix(rng, 30, 5);
  const Matrix y0 = oracles::random_matrix(rng, 30, 2);
  const auto g = rrcca::build_graph(5, {});
  AdmmConfig cfg;
  cfg.rho = 1.0;
  const auto res = rrcca::solve_graph_tv(x, y0, g, cfg);
  REQUIRE(res.trace.converged);
  REQUIRE((res.b - ols(x, y0)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("graph solver flattens within components at large rho", "[admm]") {
  rrcca::Rng rng(83);
  const Matrix x = oracles::random_matrix(rng, 60, 9);
  const Matrix y0 = oracles::random_matrix(rng, 60, 2);
  const auto g = rrcca::grid_graph(3, 3);
  AdmmConfig cfg;
  cfg.rho = 1e3 * rrcca::rho_max_graph(x, y0, g);
  cfg.eps = 1e-9;
  cfg.max_iter = 50000;
  const auto res = rrcca::solve_graph_tv(x, y0, g, cfg);
  REQUIRE(oracles::l21_norm(g.incidence * res.b) < 1e-6);
}

TEST_CASE("graph solver matches the subgradient oracle on its edge problem", "[admm]") {
  rrcca::Rng rng(89);
  const Matrix x = oracles::random_matrix(rng, 50, 2);
  const Matrix y0 = oracles::random_matrix(rng, 50, 2);
  const auto g = rrcca::build_graph(2, {{0, 1}});
  AdmmConfig cfg;
  cfg.rho = 0.3 * rrcca::rho_max_graph(x, y0, g);
  cfg.eps = 1e-9;
  cfg.max_iter = 50000;
  const auto res = rrcca::solve_graph_tv(x, y0, g, cfg);
  REQUIRE(res.trace.converged);

  // Reproduce the rho-independent deflation with an independent least
  // squares solve, then pit the edge-space ADMM against subgradient descent
  // on the same deflated problem.
  Matrix comp_sums = Matrix::Zero(50, 1);
  comp_sums.col(0) = x.col(0) + x.col(1);
  const Matrix coef = ols(comp_sums, y0);
  const Matrix y0_defl = y0 - comp_sums * coef;
  const Matrix edge_design = x * g.incidence_pinv;

  const double got = oracles::objective_sparse(edge_design, y0_defl, res.theta, cfg.rho);
  const double want = oracles::subgradient_sparse(edge_design, y0_defl, cfg.rho, 100000);
  REQUIRE(std::abs(got - want) < 1e-4 * std::abs(want));

  // Frobenius-orthogonal split of the output.
  const Matrix gamma_part = g.incidence_pinv * res.theta;
  REQUIRE(std::abs((res.pi_part.array() * gamma_part.array()).sum()) < 1e-8);
}

TEST_CASE("ridge solve", "[admm]") {
  rrcca::Rng rng(97);
  SECTION("orthonormal design with identity kernel has a closed form") {
    const Matrix x = orthonormal_design(rng, 40, 5);
    const Matrix y0 = oracles::random_matrix(rng, 40, 3);
    const double rho = 0.7;
    const Matrix got = rrcca::solve_ridge(x, y0, Matrix::Identity(5, 5), rho);
    const Matrix want = x.transpose() * y0 / (40.0 * (1.0 + rho));
    REQUIRE((got - want).cwiseAbs().maxCoeff() < 1e-10);
  }
  SECTION("rho to zero approaches OLS") {
    const Matrix x = oracles::random_matrix(rng, 30, 4);
    const Matrix y0 = oracles::random_matrix(rng, 30, 2);
    const Matrix got = rrcca::solve_ridge(x, y0, Matrix::Identity(4, 4), 1e-10);
    REQUIRE((got - ols(x, y0)).cwiseAbs().maxCoeff() < 1e-6);
  }
  SECTION("dual path agrees with an explicit primal solve for p > n") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      rrcca::Rng prng(100 + seed);
      const Matrix x = oracles::random_matrix(prng, 10, 30);
      const Matrix y0 = oracles::random_matrix(prng, 10, 2);
      for (const bool random_kernel : {false, true}) {
        Matrix k = Matrix::Identity(30, 30);
        if (random_kernel) {
          k = oracles::random_psd(prng, 30);
          k.diagonal().array() += 1.0;
        }
        const double rho = 0.4;
        const Matrix got = rrcca::solve_ridge(x, y0, k, rho);  // dual path, p > n
        const Matrix normal = x.transpose() * x / 10.0 + rho * k;
        const Matrix want = normal.ldlt().solve(x.transpose() * y0 / 10.0);
        REQUIRE((got - want).cwiseAbs().maxCoeff() < 1e-8);
      }
    }
  }
  SECTION("rho = 0 with a singular design is rejected") {
    const Matrix x = oracles::random_matrix(rng, 5, 8);
    const Matrix y0 = oracles::random_matrix(rng, 5, 2);
    REQUIRE_THROWS_AS(rrcca::solve_ridge(x, y0, Matrix::Identity(8, 8), 0.0),
                      rrcca::RankDeficientError);
  }
}

TEST_CASE("rho_max anchors", "[admm]") {
  rrcca::Rng rng(101);
  const Matrix x = oracles::random_matrix(rng, 20, 4);
  SECTION("zero response gives zero") {
    REQUIRE(rrcca::rho_max_sparse(x, Matrix::Zero(20, 2)) == 0.0);
    const auto g = rrcca::build_graph(4, {{0, 1}, {2, 3}});
    REQUIRE(rrcca::rho_max_graph(x, Matrix::Zero(20, 2), g) == 0.0);
  }
  SECTION("edgeless graph gives zero") {
    const auto g = rrcca::build_graph(4, {});
    REQUIRE(rrcca::rho_max_graph(x, oracles::random_matrix(rng, 20, 2), g) == 0.0);
  }
}

TEST_CASE("warm starts and iteration caps", "[admm]") {
  rrcca::Rng rng(103);
  const Matrix x = oracles::random_matrix(rng, 40, 6);
  const Matrix y0 = oracles::random_matrix(rng, 40, 2);
  AdmmConfig cfg;
  cfg.rho = 0.3 * rrcca::rho_max_sparse(x, y0);
  cfg.eps = 1e-8;
  cfg.max_iter = 50000;
  const auto cold = rrcca::solve_sparse_l21(x, y0, cfg);
  REQUIRE(cold.trace.converged);

  rrcca::WarmStart warm{cold.b, cold.b, Matrix::Zero(6, 2)};
  const auto rewarmed = rrcca::solve_sparse_l21(x, y0, cfg, &warm);
  REQUIRE(rewarmed.trace.converged);
  REQUIRE(rewarmed.trace.iterations <= cold.trace.iterations);
  REQUIRE((rewarmed.b - cold.b).cwiseAbs().maxCoeff() < 1e-6);

  AdmmConfig tiny = cfg;
  tiny.max_iter = 1;
  tiny.eps = 1e-16;
  const auto capped = rrcca::solve_sparse_l21(x, y0, tiny);
  REQUIRE_FALSE(capped.trace.converged);
  REQUIRE(capped.trace.iterations == 1);
}
