// Command-line front end: wires the generators, estimators, cross-validation
// and benchmark runner to the filesystem.
//
// Exit codes: 0 success, 2 usage/config error, 3 rank deficiency,
// 4 empty model, 5 CV failure, 1 anything else.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rrcca/benchmark.hpp"
#include "rrcca/cca.hpp"
#include "rrcca/csv.hpp"
#include "rrcca/evaluation.hpp"
#include "rrcca/serialize.hpp"
#include "rrcca/synthetic.hpp"

namespace fs = std::filesystem;
using rrcca::json;
using rrcca::Matrix;

namespace {

int g_verbosity = 1;  // 0 quiet, 1 info, 2 debug

void log_info(const std::string& msg) {
  if (g_verbosity >= 1) std::cerr << "[rrcca] " << msg << "\n";
}

void log_debug(const std::string& msg) {
  if (g_verbosity >= 2) std::cerr << "[rrcca:debug] " << msg << "\n";
}

int default_jobs() {
  if (const char* env = std::getenv("RRCCA_JOBS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return 1;
}

/// Values from a JSON config file become extra command-line tokens for any
/// long option not already given; explicit flags always win. Unknown keys
/// surface as CLI11 parse errors (exit 2).
std::vector<std::string> merge_config_args(const std::vector<std::string>& args) {
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
  }
  if (config_path.empty()) return args;

  const json cfg = json::parse(rrcca::read_text_file(config_path));
  if (!cfg.is_object()) throw rrcca::InvalidInputError("config file: expected a JSON object");
  auto given = [&args](const std::string& name) {
    const std::string flag = "--" + name;
    for (const auto& a : args) {
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    }
    return false;
  };
  std::vector<std::string> merged = args;
  for (const auto& item : cfg.items()) {
    if (given(item.key())) continue;
    const auto& v = item.value();
    merged.push_back("--" + item.key() + "=" +
                     (v.is_string() ? v.get<std::string>() : v.dump()));
  }
  return merged;
}

struct CommonFitArgs {
  std::string x_path, y_path, out_dir;
  std::string method = "rrr";
  int rank = 1;
  double rho = 0.0;
  std::string edges_path, groups_path, kernel_path;
  int group_size = 0;
  bool shrink_y = false;
  bool center = true;
  std::string u_recovery = "via-b";
  double delta = 1.0, eps = 1e-5;
  int max_iter = 5000;
  bool emit_json = false;
};

void add_fit_options(CLI::App* cmd, CommonFitArgs& a, bool with_rho) {
  cmd->add_option("--config", "JSON config file; explicit flags take precedence")
      ->type_name("FILE");
  cmd->add_option("--x", a.x_path, "predictor matrix CSV (rows = samples, no header)")
      ->required();
  cmd->add_option("--y", a.y_path, "response matrix CSV")->required();
  cmd->add_option("--out", a.out_dir, "output directory")->required();
  cmd->add_option("--method", a.method,
                  "rrr | rrr-pinv | oracle | sparse | group | graph | ridge")
      ->check(CLI::IsMember({"rrr", "rrr-pinv", "oracle", "sparse", "group", "graph",
                             "ridge"}));
  cmd->add_option("--r", a.rank, "number of canonical directions");
  if (with_rho) cmd->add_option("--rho", a.rho, "penalty level");
  cmd->add_option("--edges", a.edges_path, "edge list CSV (src,dst header, 1-based)");
  cmd->add_option("--groups", a.groups_path,
                  "group labels CSV: header 'group', one integer per X column");
  cmd->add_option("--group-size", a.group_size,
                  "contiguous group size (alternative to --groups)");
  cmd->add_option("--ridge-kernel", a.kernel_path, "PSD kernel matrix CSV (default identity)");
  cmd->add_flag("--shrink-y,!--no-shrink-y", a.shrink_y,
                "Ledoit-Wolf shrink Sigma_Y before whitening");
  cmd->add_flag("--center,!--no-center", a.center, "column-center X and Y before fitting");
  cmd->add_option("--u-recovery", a.u_recovery, "via-b | via-sqrt (plain rrr only)")
      ->check(CLI::IsMember({"via-b", "via-sqrt"}));
  cmd->add_option("--delta", a.delta, "ADMM step parameter");
  cmd->add_option("--eps", a.eps, "ADMM convergence threshold");
  cmd->add_option("--max-iter", a.max_iter, "ADMM iteration cap");
  cmd->add_flag("--json", a.emit_json, "print a JSON summary to stdout");
}

std::vector<std::vector<int>> load_groups(const CommonFitArgs& a, int p) {
  if (!a.groups_path.empty()) {
    std::istringstream ss(rrcca::read_text_file(a.groups_path));
    std::string line;
    if (!std::getline(ss, line) || line.rfind("group", 0) != 0) {
      throw rrcca::InvalidInputError("groups file: expected header 'group'");
    }
    std::map<long, std::vector<int>> by_label;
    int row = 0;
    while (std::getline(ss, line)) {
      if (line.empty() || line == "\r") continue;
      by_label[std::stol(line)].push_back(row++);
    }
    if (row != p) {
      throw rrcca::InvalidInputError("groups file: expected one label per X column");
    }
    std::vector<std::vector<int>> groups;
    for (auto& [label, members] : by_label) groups.push_back(std::move(members));
    return groups;
  }
  if (a.group_size >= 1) return rrcca::contiguous_groups(p, a.group_size);
  throw rrcca::InvalidInputError("group method needs --groups or --group-size");
}

rrcca::FitOptions build_fit_options(const CommonFitArgs& a, const Matrix& x, double rho) {
  rrcca::FitOptions opts;
  opts.rank = a.rank;
  opts.shrink_sigma_y = a.shrink_y;
  opts.center = a.center;
  opts.u_recovery =
      a.u_recovery == "via-sqrt" ? rrcca::URecovery::ViaSqrt : rrcca::URecovery::ViaB;
  opts.admm.delta = a.delta;
  opts.admm.eps = a.eps;
  opts.admm.max_iter = a.max_iter;

  const int p = static_cast<int>(x.cols());
  if (a.method == "sparse") {
    opts.penalty = rrcca::SparsePenalty{rho};
  } else if (a.method == "group") {
    opts.penalty = rrcca::GroupPenalty{load_groups(a, p), rho};
  } else if (a.method == "graph") {
    if (a.edges_path.empty()) {
      throw rrcca::InvalidInputError("graph method requires --edges");
    }
    auto graph = std::make_shared<rrcca::GraphStructure>(
        rrcca::build_graph(p, rrcca::read_edges_csv(a.edges_path)));
    opts.penalty = rrcca::GraphPenalty{std::move(graph), rho};
  } else if (a.method == "ridge") {
    std::shared_ptr<const Matrix> kernel;
    if (!a.kernel_path.empty()) {
      kernel = std::make_shared<Matrix>(rrcca::read_matrix_csv(a.kernel_path));
    }
    opts.penalty = rrcca::RidgePenalty{std::move(kernel), rho};
  } else if (a.method == "rrr-pinv") {
    opts.pinv_fallback = true;
  }
  return opts;
}

// The output directory is deliberately absent: recording it would make
// reruns into different directories differ byte-wise for no provenance gain.
json fit_args_to_json(const CommonFitArgs& a, std::optional<double> rho) {
  json cfg{{"x", a.x_path},      {"y", a.y_path},
           {"method", a.method},
           {"r", a.rank},        {"shrink_y", a.shrink_y},
           {"center", a.center}, {"u_recovery", a.u_recovery},
           {"delta", a.delta},   {"eps", a.eps},
           {"max_iter", a.max_iter}};
  if (rho) cfg["rho"] = *rho;
  if (!a.edges_path.empty()) cfg["edges"] = a.edges_path;
  if (!a.groups_path.empty()) cfg["groups"] = a.groups_path;
  if (a.group_size >= 1) cfg["group_size"] = a.group_size;
  if (!a.kernel_path.empty()) cfg["ridge_kernel"] = a.kernel_path;
  return cfg;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string regime = "sparse";
  int n = 500, p = 100, q = 30, r = 3, p1 = 20, r_pca = 5, n_nnz = 10;
  int group_size = 10, active_groups = 5, edge_support = 5;
  std::string grid = "10x10";
  std::string signal = "high";
  std::uint64_t seed = 0;
  double ridge_eps = 0.0;
  std::string out_dir;
  bool emit_json = false;
};

rrcca::SimConfig simulate_config(const SimulateArgs& a) {
  rrcca::SimConfig cfg;
  cfg.regime = rrcca::regime_from_string(a.regime);
  cfg.n = a.n;
  cfg.p = a.p;
  cfg.q = a.q;
  cfg.r = a.r;
  cfg.p1 = std::min(a.p1, a.p);
  cfg.r_pca = a.r_pca;
  cfg.n_nnz = a.n_nnz;
  cfg.group_size = a.group_size;
  cfg.active_groups = a.active_groups;
  cfg.edge_support = a.edge_support;
  cfg.signal = rrcca::signal_from_string(a.signal);
  cfg.seed = a.seed;
  cfg.ridge_eps = a.ridge_eps;
  if (cfg.regime == rrcca::Regime::Graph) {
    const auto x = a.grid.find('x');
    if (x == std::string::npos) {
      throw rrcca::InvalidInputError("--grid must look like ROWSxCOLS, e.g. 10x10");
    }
    cfg.grid_rows = std::stoi(a.grid.substr(0, x));
    cfg.grid_cols = std::stoi(a.grid.substr(x + 1));
    cfg.p = cfg.grid_rows * cfg.grid_cols;
    cfg.p1 = std::min(cfg.p1, cfg.p);
  }
  cfg.validate();
  return cfg;
}

int run_simulate(const SimulateArgs& a) {
  const auto cfg = simulate_config(a);
  fs::create_directories(a.out_dir);
  const fs::path out(a.out_dir);

  rrcca::Rng gen_rng(cfg.seed);
  const auto gt = rrcca::generate(cfg, gen_rng);
  rrcca::Rng sample_rng(rrcca::mix_seed(cfg.seed, 1));
  const auto [x, y] = rrcca::sample_joint(gt, cfg.n, sample_rng);

  rrcca::write_matrix_csv(out / "X.csv", x);
  rrcca::write_matrix_csv(out / "Y.csv", y);
  rrcca::write_matrix_csv(out / "U_star.csv", gt.u_star);
  rrcca::write_matrix_csv(out / "V_star.csv", gt.v_star);
  rrcca::write_json_file(out / "ground_truth.json", rrcca::ground_truth_to_json(gt, cfg));
  if (gt.graph) rrcca::write_edges_csv(out / "edges.csv", gt.graph->edges);
  rrcca::write_json_file(out / "meta.json",
                         rrcca::meta_json("simulate", rrcca::sim_config_to_json(cfg)));
  log_info("simulated " + rrcca::to_string(cfg.regime) + " model into " + a.out_dir);

  if (a.emit_json) {
    std::cout << json{{"out", a.out_dir},
                      {"regime", rrcca::to_string(cfg.regime)},
                      {"n", cfg.n},
                      {"p", cfg.p},
                      {"q", cfg.q},
                      {"u_support_size", static_cast<int>(gt.u_support.size())}}
                     .dump()
              << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// fit

int run_fit(const CommonFitArgs& a) {
  const Matrix x = rrcca::read_matrix_csv(a.x_path);
  const Matrix y = rrcca::read_matrix_csv(a.y_path);
  fs::create_directories(a.out_dir);
  const fs::path out(a.out_dir);

  rrcca::CcaModel model;
  if (a.method == "oracle") {
    model = rrcca::cca_gep_oracle(x, y, a.rank, a.center);
    model.method = "oracle";
  } else if (a.method == "rrr" || a.method == "rrr-pinv") {
    model = rrcca::fit_cca_rrr(x, y, build_fit_options(a, x, 0.0));
  } else {
    model = rrcca::fit_cca_penalized(x, y, build_fit_options(a, x, a.rho));
  }

  const json meta = rrcca::meta_json("fit", fit_args_to_json(a, a.rho));
  json model_json = rrcca::model_to_json(model);
  model_json["meta"] = meta;
  rrcca::write_json_file(out / "model.json", model_json);
  json trace_json = rrcca::to_json(model.trace);
  trace_json["meta"] = meta;
  rrcca::write_json_file(out / "trace.json", trace_json);
  log_info("fit method=" + a.method + " rank=" + std::to_string(model.rank()) +
           (model.trace.iterations > 0
                ? " admm_iterations=" + std::to_string(model.trace.iterations)
                : ""));

  if (a.emit_json) {
    std::cout << json{{"out", a.out_dir},
                      {"method", a.method},
                      {"rank", model.rank()},
                      {"correlations", rrcca::vector_to_json(model.correlations)},
                      {"converged", model.trace.iterations == 0 || model.trace.converged}}
                     .dump()
              << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// cv

struct CvArgs : CommonFitArgs {
  int folds = 5;
  std::string grid;  // comma-separated explicit grid
  int grid_size = 10;
  double grid_min_frac = 1e-3;
  std::uint64_t cv_seed = 0;
};

int run_cv(const CvArgs& a) {
  if (a.method == "rrr" || a.method == "rrr-pinv" || a.method == "oracle") {
    throw rrcca::InvalidInputError("cv requires a penalized method");
  }
  const Matrix x = rrcca::read_matrix_csv(a.x_path);
  const Matrix y = rrcca::read_matrix_csv(a.y_path);
  fs::create_directories(a.out_dir);
  const fs::path out(a.out_dir);

  const auto opts = build_fit_options(a, x, 0.0);
  std::vector<double> grid;
  if (!a.grid.empty()) {
    std::istringstream ss(a.grid);
    std::string tok;
    while (std::getline(ss, tok, ',')) grid.push_back(rrcca::parse_double(tok));
  } else {
    grid = rrcca::default_rho_grid(x, y, opts, a.grid_size, a.grid_min_frac);
  }
  log_debug("cv grid of " + std::to_string(grid.size()) + " points");

  const auto report = rrcca::kfold_cv(x, y, opts, grid, a.folds, a.cv_seed);

  json cfg = fit_args_to_json(a, std::nullopt);
  cfg["folds"] = a.folds;
  cfg["cv_seed"] = a.cv_seed;
  cfg["grid_size"] = a.grid_size;
  cfg["grid_min_frac"] = a.grid_min_frac;
  if (!a.grid.empty()) cfg["grid"] = a.grid;
  const json meta = rrcca::meta_json("cv", cfg);

  json report_json = rrcca::cv_report_to_json(report);
  report_json["meta"] = meta;
  rrcca::write_json_file(out / "cv_report.json", report_json);
  json model_json = rrcca::model_to_json(report.refit);
  model_json["meta"] = meta;
  rrcca::write_json_file(out / "model.json", model_json);
  json trace_json = rrcca::to_json(report.refit.trace);
  trace_json["meta"] = meta;
  rrcca::write_json_file(out / "trace.json", trace_json);
  log_info("cv selected rho=" + rrcca::format_double(report.selected_rho));

  if (a.emit_json) {
    std::cout << json{{"out", a.out_dir},
                      {"selected_rho", report.selected_rho},
                      {"rank", report.refit.rank()}}
                     .dump()
              << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// benchmark

struct BenchmarkArgs {
  std::string spec_path, out_dir;
  int jobs = default_jobs();
  bool timings = false;
  bool emit_json = false;
};

int run_benchmark(const BenchmarkArgs& a) {
  const json spec = json::parse(rrcca::read_text_file(a.spec_path));
  auto cfg = rrcca::benchmark_config_from_json(spec);
  cfg.jobs = a.jobs;
  cfg.include_timings = a.timings;
  fs::create_directories(a.out_dir);
  const fs::path out(a.out_dir);

  log_info("benchmark: " + std::to_string(cfg.regimes.size()) + " regime(s) x " +
           std::to_string(cfg.methods.size()) + " method(s) x " +
           std::to_string(cfg.replicates) + " replicate(s), jobs=" +
           std::to_string(cfg.jobs));
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = rrcca::benchmark_run(cfg);
  const double wall_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  int n_ok = 0;
  for (const auto& row : result.rows) n_ok += row.status == "ok";
  log_info("benchmark finished in " + rrcca::format_double(wall_s) + " s, " +
           std::to_string(n_ok) + "/" + std::to_string(result.rows.size()) + " rows ok");

  rrcca::write_text_file(out / "results.csv",
                         rrcca::benchmark_result_to_csv(result, a.timings));
  json results_json = rrcca::benchmark_result_to_json(result, a.timings);
  results_json["meta"] = rrcca::meta_json("benchmark", spec);
  rrcca::write_json_file(out / "results.json", results_json);

  if (a.emit_json) {
    std::cout << json{{"out", a.out_dir}, {"rows", result.rows.size()}, {"rows_ok", n_ok}}
                     .dump()
              << "\n";
  }
  if (!result.rows.empty() && n_ok == 0) {
    log_info("all benchmark rows failed");
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reduced-rank regression CCA toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // -v/-q may appear after the subcommand name
  app.add_flag_callback(
      "-v,--verbose", [] { g_verbosity = 2; }, "debug logging");
  app.add_flag_callback(
      "-q,--quiet", [] { g_verbosity = 0; }, "suppress logging");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "generate a synthetic dataset");
  sim_cmd->add_option("--config", "JSON config file; explicit flags take precedence")
      ->type_name("FILE");
  sim_cmd->add_option("--regime", sim.regime, "sparse | group | graph")
      ->check(CLI::IsMember({"sparse", "group", "graph"}));
  sim_cmd->add_option("--n", sim.n, "samples");
  sim_cmd->add_option("--p", sim.p, "X dimension");
  sim_cmd->add_option("--q", sim.q, "Y dimension");
  sim_cmd->add_option("--r", sim.r, "number of canonical pairs");
  sim_cmd->add_option("--p1", sim.p1, "structured block size");
  sim_cmd->add_option("--r-pca", sim.r_pca, "structured block rank");
  sim_cmd->add_option("--n-nnz", sim.n_nnz, "sparse regime support size");
  sim_cmd->add_option("--group-size", sim.group_size, "group regime group size");
  sim_cmd->add_option("--active-groups", sim.active_groups, "group regime active groups");
  sim_cmd->add_option("--grid", sim.grid, "graph regime grid, ROWSxCOLS");
  sim_cmd->add_option("--edge-support", sim.edge_support, "graph regime edge support");
  sim_cmd->add_option("--signal", sim.signal, "high | medium | low")
      ->check(CLI::IsMember({"high", "medium", "low"}));
  sim_cmd->add_option("--seed", sim.seed, "64-bit seed");
  sim_cmd->add_option("--ridge-eps", sim.ridge_eps, "adds eps*I to both covariance blocks");
  sim_cmd->add_option("--out", sim.out_dir, "output directory")->required();
  sim_cmd->add_flag("--json", sim.emit_json, "print a JSON summary to stdout");

  CommonFitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "fit a CCA model");
  add_fit_options(fit_cmd, fit, true);

  CvArgs cv;
  auto* cv_cmd = app.add_subcommand("cv", "select rho by k-fold cross-validation, then fit");
  add_fit_options(cv_cmd, cv, false);
  cv_cmd->add_option("--folds", cv.folds, "number of folds");
  cv_cmd->add_option("--grid", cv.grid, "explicit comma-separated rho grid");
  cv_cmd->add_option("--grid-size", cv.grid_size, "log-spaced grid size");
  cv_cmd->add_option("--grid-min-frac", cv.grid_min_frac,
                     "grid lower end as a fraction of rho_max");
  cv_cmd->add_option("--cv-seed", cv.cv_seed, "fold assignment seed");

  BenchmarkArgs bench;
  auto* bench_cmd = app.add_subcommand("benchmark", "run a regimes x methods replicate sweep");
  bench_cmd->add_option("--config", "JSON config file; explicit flags take precedence")
      ->type_name("FILE");
  bench_cmd->add_option("--spec", bench.spec_path, "benchmark spec JSON")->required();
  bench_cmd->add_option("--out", bench.out_dir, "output directory")->required();
  bench_cmd->add_option("--jobs", bench.jobs, "worker threads (env RRCCA_JOBS)");
  bench_cmd->add_flag("--timings", bench.timings, "include wall_ms in results");
  bench_cmd->add_flag("--json", bench.emit_json, "print a JSON summary to stdout");

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    auto merged = merge_config_args(args);
    std::reverse(merged.begin(), merged.end());  // CLI11 consumes reversed args
    app.parse(merged);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 2;
  } catch (const rrcca::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*sim_cmd) return run_simulate(sim);
    if (*fit_cmd) return run_fit(fit);
    if (*cv_cmd) return run_cv(cv);
    return run_benchmark(bench);
  } catch (const rrcca::RankDeficientError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const rrcca::EmptyModelError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const rrcca::CvFailedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const rrcca::InvalidInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const rrcca::InvalidGraphError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
