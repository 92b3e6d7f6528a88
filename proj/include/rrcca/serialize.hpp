#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "rrcca/benchmark.hpp"
#include "rrcca/cca.hpp"
#include "rrcca/csv.hpp"
#include "rrcca/evaluation.hpp"
#include "rrcca/synthetic.hpp"

namespace rrcca {

using nlohmann::json;

inline constexpr const char* kSchemaVersion = "1";
inline constexpr const char* kToolVersion = "0.1.0";

/// Rejects keys outside the documented schema; config typos should fail
/// loudly, not be ignored.
inline void check_keys(const json& obj, const std::vector<std::string>& allowed,
                       const std::string& context) {
  if (!obj.is_object()) throw InvalidInputError(context + ": expected a JSON object");
  for (const auto& item : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      throw InvalidInputError(context + ": unknown key '" + item.key() + "'");
    }
  }
}

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline json to_json(const SolveTrace& trace) {
  return json{{"iterations", trace.iterations},
              {"primal_residual", trace.primal_residual},
              {"dual_residual", trace.dual_residual},
              {"converged", trace.converged},
              {"used_pinv", trace.used_pinv},
              {"objective_history", trace.objective_history}};
}

/// Support indices are serialized 1-based, matching the edge-list CSV
/// convention for node indices.
inline json model_to_json(const CcaModel& model) {
  json support = nullptr;
  if (model.support) {
    json list = json::array();
    for (int j : *model.support) list.push_back(j + 1);
    support = std::move(list);
  }
  return json{{"schema_version", kSchemaVersion},
              {"method", model.method},
              {"rho", model.penalty_value},
              {"requested_rank", model.requested_rank},
              {"rank", model.rank()},
              {"rank_reduced", model.rank_reduced},
              {"correlations", vector_to_json(model.correlations)},
              {"u", matrix_to_json(model.u)},
              {"v", matrix_to_json(model.v)},
              {"support", std::move(support)},
              {"gram_u", matrix_to_json(model.gram_u)}};
}

inline json cv_report_to_json(const CvReport& report) {
  return json{{"schema_version", kSchemaVersion},
              {"grid", report.grid},
              {"fold_scores", matrix_to_json(report.fold_scores)},
              {"mean_scores", report.mean_scores},
              {"selected_rho", report.selected_rho},
              {"selected_index", report.selected_index}};
}

inline std::string signal_to_string(Signal s) { return to_string(s); }

inline Signal signal_from_string(const std::string& s) {
  if (s == "high") return Signal::High;
  if (s == "medium") return Signal::Medium;
  if (s == "low") return Signal::Low;
  throw InvalidInputError("unknown signal strength '" + s + "'");
}

inline Regime regime_from_string(const std::string& s) {
  if (s == "sparse") return Regime::Sparse;
  if (s == "group") return Regime::Group;
  if (s == "graph") return Regime::Graph;
  throw InvalidInputError("unknown regime '" + s + "'");
}

inline json sim_config_to_json(const SimConfig& cfg) {
  json out{{"regime", to_string(cfg.regime)},
           {"n", cfg.n},
           {"p", cfg.p},
           {"q", cfg.q},
           {"r", cfg.r},
           {"r_pca", cfg.r_pca},
           {"p1", cfg.p1},
           {"signal", to_string(cfg.signal)},
           {"seed", cfg.seed},
           {"ridge_eps", cfg.ridge_eps}};
  switch (cfg.regime) {
    case Regime::Sparse: out["n_nnz"] = cfg.n_nnz; break;
    case Regime::Group:
      out["group_size"] = cfg.group_size;
      out["active_groups"] = cfg.active_groups;
      break;
    case Regime::Graph:
      out["grid_rows"] = cfg.grid_rows;
      out["grid_cols"] = cfg.grid_cols;
      out["edge_support"] = cfg.edge_support;
      break;
  }
  return out;
}

inline SimConfig sim_config_from_json(const json& j, const std::string& context) {
  check_keys(j,
             {"regime", "n", "p", "q", "r", "r_pca", "p1", "n_nnz", "group_size",
              "active_groups", "grid_rows", "grid_cols", "edge_support", "signal", "seed",
              "ridge_eps", "name"},
             context);
  SimConfig cfg;
  if (j.contains("regime")) cfg.regime = regime_from_string(j.at("regime"));
  cfg.n = j.value("n", cfg.n);
  cfg.p = j.value("p", cfg.p);
  cfg.q = j.value("q", cfg.q);
  cfg.r = j.value("r", cfg.r);
  cfg.r_pca = j.value("r_pca", cfg.r_pca);
  cfg.p1 = j.value("p1", std::min(cfg.p1, cfg.p));
  cfg.n_nnz = j.value("n_nnz", std::min(cfg.n_nnz, cfg.p));
  cfg.group_size = j.value("group_size", cfg.group_size);
  cfg.active_groups = j.value("active_groups", cfg.active_groups);
  cfg.grid_rows = j.value("grid_rows", cfg.grid_rows);
  cfg.grid_cols = j.value("grid_cols", cfg.grid_cols);
  cfg.edge_support = j.value("edge_support", cfg.edge_support);
  if (j.contains("signal")) cfg.signal = signal_from_string(j.at("signal"));
  cfg.seed = j.value("seed", cfg.seed);
  cfg.ridge_eps = j.value("ridge_eps", cfg.ridge_eps);
  cfg.validate();
  return cfg;
}

/// Everything the ground-truth bundle records besides the U*/V* matrices,
/// which live in their own CSV files.
inline json ground_truth_to_json(const GroundTruth& gt, const SimConfig& cfg) {
  json support = json::array();
  for (int j : gt.u_support) support.push_back(j + 1);
  json out{{"schema_version", kSchemaVersion},
           {"config", sim_config_to_json(cfg)},
           {"lambda_star", vector_to_json(gt.lambda_star)},
           {"u_support", std::move(support)},
           {"u_support_size", static_cast<int>(gt.u_support.size())},
           {"files", json{{"u_star", "U_star.csv"}, {"v_star", "V_star.csv"}}}};
  if (gt.graph) {
    out["gamma_support_size"] = gt.gamma_support;
    out["edge_count"] = gt.graph->edge_count();
    out["files"]["edges"] = "edges.csv";
  }
  return out;
}

inline AdmmConfig admm_config_from_json(const json& j, const std::string& context) {
  check_keys(j, {"delta", "eps", "max_iter", "record_objective"}, context);
  AdmmConfig cfg;
  cfg.delta = j.value("delta", cfg.delta);
  cfg.eps = j.value("eps", cfg.eps);
  cfg.max_iter = j.value("max_iter", cfg.max_iter);
  cfg.record_objective = j.value("record_objective", cfg.record_objective);
  return cfg;
}

inline json admm_config_to_json(const AdmmConfig& cfg) {
  return json{{"delta", cfg.delta},
              {"eps", cfg.eps},
              {"max_iter", cfg.max_iter},
              {"record_objective", cfg.record_objective}};
}

inline BenchmarkConfig benchmark_config_from_json(const json& j) {
  check_keys(j,
             {"seed", "replicates", "n_validation", "cv", "admm", "regimes", "methods",
              "jobs"},
             "benchmark spec");
  BenchmarkConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  cfg.replicates = j.value("replicates", cfg.replicates);
  cfg.n_validation = j.value("n_validation", cfg.n_validation);
  cfg.jobs = j.value("jobs", cfg.jobs);
  AdmmConfig admm;
  if (j.contains("admm")) admm = admm_config_from_json(j.at("admm"), "benchmark spec admm");
  admm.record_objective = false;  // keep benchmark solves lean
  if (j.contains("cv")) {
    const auto& cv = j.at("cv");
    check_keys(cv, {"folds", "grid_size", "grid_min_frac"}, "benchmark spec cv");
    cfg.cv_folds = cv.value("folds", cfg.cv_folds);
    cfg.grid_size = cv.value("grid_size", cfg.grid_size);
    cfg.grid_min_frac = cv.value("grid_min_frac", cfg.grid_min_frac);
  }
  if (!j.contains("regimes") || !j.at("regimes").is_array() || j.at("regimes").empty()) {
    throw InvalidInputError("benchmark spec: 'regimes' must be a nonempty array");
  }
  int idx = 0;
  for (const auto& rj : j.at("regimes")) {
    const std::string name = rj.value("name", "regime" + std::to_string(idx));
    cfg.regimes.emplace_back(name, sim_config_from_json(rj, "regime '" + name + "'"));
    ++idx;
  }
  if (!j.contains("methods") || !j.at("methods").is_array() || j.at("methods").empty()) {
    throw InvalidInputError("benchmark spec: 'methods' must be a nonempty array");
  }
  for (const auto& mj : j.at("methods")) {
    check_keys(mj, {"name", "method", "shrink_y", "cv", "rho", "admm"}, "method entry");
    MethodSpec m;
    if (!mj.contains("method")) throw InvalidInputError("method entry: missing 'method'");
    m.kind = mj.at("method");
    m.name = mj.value("name", m.kind);
    m.shrink_y = mj.value("shrink_y", m.shrink_y);
    m.cv = mj.value("cv", m.cv);
    m.fixed_rho = mj.value("rho", m.fixed_rho);
    m.admm = mj.contains("admm")
                 ? admm_config_from_json(mj.at("admm"), "method '" + m.name + "' admm")
                 : admm;
    m.admm.record_objective = false;
    cfg.methods.push_back(std::move(m));
  }
  return cfg;
}

inline json benchmark_row_to_json(const BenchmarkRow& row, bool include_timings) {
  json out{{"regime", row.regime},
           {"method", row.method},
           {"replicate", row.replicate},
           {"seed", row.seed},
           {"status", row.status},
           {"selected_rho", row.selected_rho},
           {"stacked_distance", row.stacked_distance},
           {"validation_correlation", row.validation_correlation},
           {"validation_mse", row.validation_mse},
           {"support_size", row.support_size},
           {"fpr", row.fpr},
           {"fnr", row.fnr},
           {"gamma_u_l21", row.gamma_u_l21},
           {"converged", row.converged},
           {"error", row.error}};
  if (include_timings) out["wall_ms"] = row.wall_ms;
  return out;
}

inline json benchmark_result_to_json(const BenchmarkResult& result, bool include_timings) {
  json rows = json::array();
  for (const auto& row : result.rows) rows.push_back(benchmark_row_to_json(row, include_timings));
  json aggs = json::array();
  for (const auto& a : result.aggregates) {
    aggs.push_back(json{{"regime", a.regime},
                        {"method", a.method},
                        {"n_ok", a.n_ok},
                        {"n_failed", a.n_failed},
                        {"mean_distance", a.mean_distance},
                        {"median_distance", a.median_distance},
                        {"q25_distance", a.q25_distance},
                        {"q75_distance", a.q75_distance},
                        {"mean_validation_correlation", a.mean_validation_correlation},
                        {"mean_validation_mse", a.mean_validation_mse},
                        {"median_support_size", a.median_support_size},
                        {"median_fnr", a.median_fnr},
                        {"median_gamma_u_l21", a.median_gamma_u_l21}});
  }
  return json{{"schema_version", kSchemaVersion},
              {"rows", std::move(rows)},
              {"aggregates", std::move(aggs)}};
}

namespace detail {

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::string csv_num(double v) {
  if (std::isnan(v)) return "";
  return format_double(v);
}

}  // namespace detail

/// One row per (regime, method, replicate), header included.
inline std::string benchmark_result_to_csv(const BenchmarkResult& result,
                                           bool include_timings) {
  std::string out =
      "regime,method,replicate,seed,status,selected_rho,stacked_distance,"
      "validation_correlation,validation_mse,support_size,fpr,fnr,gamma_u_l21,converged";
  if (include_timings) out += ",wall_ms";
  out += ",error\n";
  for (const auto& r : result.rows) {
    out += detail::csv_quote(r.regime) + ',' + detail::csv_quote(r.method) + ',' +
           std::to_string(r.replicate) + ',' + std::to_string(r.seed) + ',' + r.status +
           ',' + detail::csv_num(r.selected_rho) + ',' + detail::csv_num(r.stacked_distance) +
           ',' + detail::csv_num(r.validation_correlation) + ',' +
           detail::csv_num(r.validation_mse) + ',' +
           (r.support_size < 0 ? "" : std::to_string(r.support_size)) + ',' +
           detail::csv_num(r.fpr) + ',' + detail::csv_num(r.fnr) + ',' +
           detail::csv_num(r.gamma_u_l21) + ',' + (r.converged ? "true" : "false");
    if (include_timings) out += ',' + detail::csv_num(r.wall_ms);
    out += ',' + detail::csv_quote(r.error) + '\n';
  }
  return out;
}

/// Provenance block stamped into every output file: resolved configuration
/// only, nothing volatile, so reruns stay byte-identical.
inline json meta_json(const std::string& command, const json& resolved_config) {
  return json{{"schema_version", kSchemaVersion},
              {"tool", "rrcca"},
              {"version", kToolVersion},
              {"command", command},
              {"config", resolved_config}};
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace rrcca
