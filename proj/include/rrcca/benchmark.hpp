#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "rrcca/cca.hpp"
#include "rrcca/evaluation.hpp"
#include "rrcca/synthetic.hpp"

namespace rrcca {

struct MethodSpec {
  std::string name;          // row label in the results table
  std::string kind;          // rrr | rrr_pinv | oracle | sparse | group | graph | ridge
  bool shrink_y = true;
  bool cv = true;            // penalized kinds: select rho by CV; otherwise use fixed_rho
  double fixed_rho = 0.0;
  AdmmConfig admm{};
};

struct BenchmarkConfig {
  std::uint64_t seed = 0;
  int replicates = 1;
  int n_validation = 500;
  int cv_folds = 5;
  int grid_size = 10;
  double grid_min_frac = 1e-3;
  int jobs = 1;
  bool include_timings = false;
  std::vector<std::pair<std::string, SimConfig>> regimes;
  std::vector<MethodSpec> methods;
};

struct BenchmarkRow {
  std::string regime;
  std::string method;
  int replicate = 0;
  std::uint64_t seed = 0;
  std::string status = "ok";
  std::string error;
  double selected_rho = std::numeric_limits<double>::quiet_NaN();
  double stacked_distance = std::numeric_limits<double>::quiet_NaN();
  double validation_correlation = std::numeric_limits<double>::quiet_NaN();
  double validation_mse = std::numeric_limits<double>::quiet_NaN();
  int support_size = -1;
  double fpr = std::numeric_limits<double>::quiet_NaN();
  double fnr = std::numeric_limits<double>::quiet_NaN();
  double gamma_u_l21 = std::numeric_limits<double>::quiet_NaN();
  bool converged = true;
  double wall_ms = 0.0;
};

struct CellAggregate {
  std::string regime;
  std::string method;
  int n_ok = 0;
  int n_failed = 0;
  double mean_distance = std::numeric_limits<double>::quiet_NaN();
  double median_distance = std::numeric_limits<double>::quiet_NaN();
  double q25_distance = std::numeric_limits<double>::quiet_NaN();
  double q75_distance = std::numeric_limits<double>::quiet_NaN();
  double mean_validation_correlation = std::numeric_limits<double>::quiet_NaN();
  double mean_validation_mse = std::numeric_limits<double>::quiet_NaN();
  double median_support_size = std::numeric_limits<double>::quiet_NaN();
  double median_fnr = std::numeric_limits<double>::quiet_NaN();
  double median_gamma_u_l21 = std::numeric_limits<double>::quiet_NaN();
};

struct BenchmarkResult {
  std::vector<BenchmarkRow> rows;        // regime-major, then replicate, then method
  std::vector<CellAggregate> aggregates; // one per (regime, method)
};

/// Type-7 quantile of the finite entries; NaN when none.
inline double quantile(std::vector<double> v, double prob) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }),
          v.end());
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * prob;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - lo) * (v[hi] - v[lo]);
}

inline double median(const std::vector<double>& v) { return quantile(v, 0.5); }

namespace detail {

inline FitOptions method_fit_options(const MethodSpec& method, const SimConfig& regime,
                                     const GroundTruth& gt, double rho) {
  FitOptions opts;
  opts.rank = regime.r;
  opts.shrink_sigma_y = method.shrink_y;
  opts.admm = method.admm;
  if (method.kind == "sparse") {
    opts.penalty = SparsePenalty{rho};
  } else if (method.kind == "group") {
    opts.penalty = GroupPenalty{contiguous_groups(regime.p, regime.group_size), rho};
  } else if (method.kind == "graph") {
    if (!gt.graph) throw InvalidInputError("graph method on a regime without a graph");
    opts.penalty = GraphPenalty{gt.graph, rho};
  } else if (method.kind == "ridge") {
    opts.penalty = RidgePenalty{nullptr, rho};
  } else if (method.kind == "rrr_pinv") {
    opts.pinv_fallback = true;
  } else if (method.kind != "rrr" && method.kind != "oracle") {
    throw InvalidInputError("unknown method kind '" + method.kind + "'");
  }
  return opts;
}

inline BenchmarkRow run_method(const MethodSpec& method, const std::string& regime_name,
                               const SimConfig& regime, const GroundTruth& gt,
                               const Matrix& x, const Matrix& y, const Matrix& x_val,
                               const Matrix& y_val, int replicate, std::uint64_t rep_seed,
                               const BenchmarkConfig& cfg) {
  BenchmarkRow row;
  row.regime = regime_name;
  row.method = method.name.empty() ? method.kind : method.name;
  row.replicate = replicate;
  row.seed = rep_seed;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    CcaModel model;
    if (method.kind == "oracle") {
      model = cca_gep_oracle(x, y, regime.r);
    } else if (method.kind == "rrr" || method.kind == "rrr_pinv") {
      model = fit_cca_rrr(x, y, method_fit_options(method, regime, gt, 0.0));
    } else if (method.cv) {
      FitOptions opts = method_fit_options(method, regime, gt, 0.0);
      const auto grid = default_rho_grid(x, y, opts, cfg.grid_size, cfg.grid_min_frac);
      const auto report =
          kfold_cv(x, y, opts, grid, cfg.cv_folds, mix_seed(rep_seed, 0xF01D5));
      model = report.refit;
      row.selected_rho = report.selected_rho;
      row.converged = model.trace.iterations == 0 || model.trace.converged;
    } else {
      model = fit_cca_penalized(x, y,
                                method_fit_options(method, regime, gt, method.fixed_rho));
      row.selected_rho = method.fixed_rho;
      row.converged = model.trace.iterations == 0 || model.trace.converged;
    }

    row.stacked_distance = stacked_direction_distance(model, gt);
    row.validation_correlation = validation_correlation(model, x_val, y_val);
    row.validation_mse = (x_val * model.u - y_val * model.v).squaredNorm() /
                         static_cast<double>(x_val.rows());
    if (model.support) {
      const auto sm = support_metrics(model.u, gt.u_star, 0.0);
      row.support_size = sm.est_support_size;
      row.fpr = sm.fpr;
      row.fnr = sm.fnr;
    }
    if (gt.graph) {
      double tv = 0.0;
      const Matrix gu = gt.graph->incidence * model.u;
      for (Eigen::Index j = 0; j < gu.rows(); ++j) tv += gu.row(j).norm();
      row.gamma_u_l21 = tv;
    }
  } catch (const Error& e) {
    row.status = "failed";
    row.error = e.what();
  }
  row.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  return row;
}

}  // namespace detail

/// Runs every (regime, method, replicate) cell: generate, sample, fit (with
/// CV where requested), score against the ground truth. Methods within a
/// replicate share the same data and fold split. Replicates run on a small
/// worker pool; outputs are keyed by index, so results do not depend on the
/// job count. Individual failures are recorded as failed rows and the run
/// continues.
inline BenchmarkResult benchmark_run(const BenchmarkConfig& cfg) {
  if (cfg.regimes.empty() || cfg.methods.empty()) {
    throw InvalidInputError("benchmark_run: regimes and methods must be nonempty");
  }
  if (cfg.replicates < 0) throw InvalidInputError("benchmark_run: negative replicates");

  const int n_tasks = static_cast<int>(cfg.regimes.size()) * cfg.replicates;
  const int n_methods = static_cast<int>(cfg.methods.size());
  BenchmarkResult result;
  result.rows.resize(static_cast<std::size_t>(n_tasks) * n_methods);

  std::atomic<int> next{0};
  auto worker = [&] {
    for (int task = next.fetch_add(1); task < n_tasks; task = next.fetch_add(1)) {
      const int regime_idx = task / cfg.replicates;
      const int rep = task % cfg.replicates;
      const auto& [regime_name, regime] = cfg.regimes[regime_idx];
      const std::uint64_t rep_seed =
          mix_seed(cfg.seed, static_cast<std::uint64_t>(regime_idx),
                   static_cast<std::uint64_t>(rep));

      Matrix x, y, x_val, y_val;
      GroundTruth gt;
      bool generated = false;
      std::string gen_error;
      try {
        Rng rng(rep_seed);
        gt = generate(regime, rng);
        Rng sampler(mix_seed(rep_seed, 1));
        std::tie(x, y) = sample_joint(gt, regime.n, sampler);
        std::tie(x_val, y_val) = sample_joint(gt, cfg.n_validation, sampler);
        generated = true;
      } catch (const Error& e) {
        gen_error = e.what();
      }

      for (int m = 0; m < n_methods; ++m) {
        const std::size_t slot = static_cast<std::size_t>(task) * n_methods + m;
        if (!generated) {
          BenchmarkRow row;
          row.regime = regime_name;
          row.method = cfg.methods[m].name.empty() ? cfg.methods[m].kind
                                                   : cfg.methods[m].name;
          row.replicate = rep;
          row.seed = rep_seed;
          row.status = "failed";
          row.error = gen_error;
          result.rows[slot] = std::move(row);
          continue;
        }
        result.rows[slot] = detail::run_method(cfg.methods[m], regime_name, regime, gt, x,
                                               y, x_val, y_val, rep, rep_seed, cfg);
      }
    }
  };

  const int jobs = std::max(1, cfg.jobs);
  if (jobs == 1 || n_tasks <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < std::min(jobs, n_tasks); ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (const auto& [regime_name, regime] : cfg.regimes) {
    for (const auto& method : cfg.methods) {
      const std::string method_name = method.name.empty() ? method.kind : method.name;
      CellAggregate agg;
      agg.regime = regime_name;
      agg.method = method_name;
      std::vector<double> dist, corr, mse, supp, fnr, tv;
      for (const auto& row : result.rows) {
        if (row.regime != regime_name || row.method != method_name) continue;
        if (row.status != "ok") {
          ++agg.n_failed;
          continue;
        }
        ++agg.n_ok;
        dist.push_back(row.stacked_distance);
        corr.push_back(row.validation_correlation);
        mse.push_back(row.validation_mse);
        if (row.support_size >= 0) supp.push_back(row.support_size);
        if (std::isfinite(row.fnr)) fnr.push_back(row.fnr);
        if (std::isfinite(row.gamma_u_l21)) tv.push_back(row.gamma_u_l21);
      }
      if (agg.n_ok > 0) {
        agg.mean_distance =
            std::accumulate(dist.begin(), dist.end(), 0.0) / static_cast<double>(dist.size());
        agg.median_distance = median(dist);
        agg.q25_distance = quantile(dist, 0.25);
        agg.q75_distance = quantile(dist, 0.75);
        agg.mean_validation_correlation =
            std::accumulate(corr.begin(), corr.end(), 0.0) / static_cast<double>(corr.size());
        agg.mean_validation_mse =
            std::accumulate(mse.begin(), mse.end(), 0.0) / static_cast<double>(mse.size());
        agg.median_support_size = median(supp);
        agg.median_fnr = median(fnr);
        agg.median_gamma_u_l21 = median(tv);
      }
      result.aggregates.push_back(std::move(agg));
    }
  }
  return result;
}

}  // namespace rrcca
