#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "page/config.hpp"
#include "page/orchestrator.hpp"

namespace page {

/// Shortest round-trip decimal form of a double ('.' decimal point, no
/// grouping), identical on every platform for identical bits.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline constexpr const char* kRoundsCsvHeader =
    "t,global_acc,global_loss,mean_local_acc,var_local_acc,r_cs,mean_r_i,"
    "min_p,max_p,mean_alpha,mean_eta,wall_ms";

/// Fixed-schema per-round CSV: LF line endings, '.' decimals, UTF-8.
inline void write_rounds_csv(std::ostream& os, const std::vector<RoundRecord>& history) {
  os << kRoundsCsvHeader << "\n";
  for (const RoundRecord& r : history) {
    const double min_p = *std::min_element(r.weights.begin(), r.weights.end());
    const double max_p = *std::max_element(r.weights.begin(), r.weights.end());
    double mean_alpha = 0.0, mean_eta = 0.0;
    for (int a : r.alphas) mean_alpha += a;
    for (double e : r.etas) mean_eta += e;
    mean_alpha /= static_cast<double>(r.alphas.size());
    mean_eta /= static_cast<double>(r.etas.size());
    os << r.t << ',' << format_double(r.global_acc) << ',' << format_double(r.global_loss) << ','
       << format_double(r.mean_local_acc) << ',' << format_double(r.var_local_acc) << ','
       << format_double(r.r_cs) << ',' << format_double(r.mean_r_i) << ','
       << format_double(min_p) << ',' << format_double(max_p) << ','
       << format_double(mean_alpha) << ',' << format_double(mean_eta) << ','
       << format_double(r.wall_ms) << "\n";
  }
}

inline std::string rounds_csv_string(const std::vector<RoundRecord>& history) {
  std::ostringstream os;
  write_rounds_csv(os, history);
  return os.str();
}

/// Extra per-round trajectories emitted for adaptive runs: the full weight
/// vector and every client's (alpha, eta).
inline void write_actions_csv(std::ostream& os, const std::vector<RoundRecord>& history) {
  const std::size_t n = history.empty() ? 0 : history.front().weights.size();
  os << "t";
  for (std::size_t i = 0; i < n; ++i) os << ",p_" << i;
  for (std::size_t i = 0; i < n; ++i) os << ",alpha_" << i;
  for (std::size_t i = 0; i < n; ++i) os << ",eta_" << i;
  os << "\n";
  for (const RoundRecord& r : history) {
    os << r.t;
    for (double p : r.weights) os << ',' << format_double(p);
    for (int a : r.alphas) os << ',' << a;
    for (double e : r.etas) os << ',' << format_double(e);
    os << "\n";
  }
}

inline constexpr int kSummarySchemaVersion = 1;

inline nlohmann::json summary_to_json(const ExperimentConfig& cfg,
                                      const ReplicatedResult& result) {
  nlohmann::json per_run = nlohmann::json::array();
  for (std::size_t k = 0; k < result.runs.size(); ++k) {
    const RunResult& r = result.runs[k];
    nlohmann::json run{{"seed", result.seeds[k]},
                       {"rounds_run", r.history.back().t},
                       {"final_global_acc", r.history.back().global_acc},
                       {"final_global_loss", r.history.back().global_loss},
                       {"final_local_acc", r.history.back().mean_local_acc}};
    if (r.equilibrium_round)
      run["equilibrium_round"] = *r.equilibrium_round;
    else
      run["equilibrium_round"] = nullptr;
    per_run.push_back(run);
  }
  return nlohmann::json{
      {"schema", kSummarySchemaVersion},
      {"algorithm", detail::algorithm_name(cfg.algorithm)},
      {"config_hash", config_hash(cfg)},
      {"master_seed", cfg.master_seed},
      {"seeds", result.seeds},
      {"per_run", per_run},
      {"final_global_acc", {{"mean", result.final_global_acc.mean},
                            {"variance", result.final_global_acc.variance}}},
      {"final_local_acc", {{"mean", result.final_local_acc.mean},
                           {"variance", result.final_local_acc.variance}}},
      {"equilibrium_round", {{"mean", result.equilibrium_round.mean},
                             {"variance", result.equilibrium_round.variance}}}};
}

inline nlohmann::json manifest_to_json(const ExperimentConfig& cfg,
                                       const std::vector<std::uint64_t>& seeds,
                                       const std::vector<std::string>& outputs,
                                       const std::string& started_utc,
                                       const std::string& finished_utc) {
  return nlohmann::json{{"schema", 1},
                        {"version", "0.1.0"},
                        {"config", config_to_json(cfg)},
                        {"seeds", seeds},
                        {"outputs", outputs},
                        {"started_utc", started_utc},
                        {"finished_utc", finished_utc}};
}

// --- comparison of summaries -------------------------------------------------

struct SummaryRow {
  std::string algorithm;
  double global_acc_mean = 0.0;
  double global_acc_var = 0.0;
  double local_acc_mean = 0.0;
  double local_acc_var = 0.0;
  double equilibrium_round_mean = 0.0;
};

inline SummaryRow summary_row_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("schema") || j["schema"].get<int>() != kSummarySchemaVersion)
    throw ConfigError("summary: missing or unsupported schema");
  for (const char* key : {"algorithm", "final_global_acc", "final_local_acc", "equilibrium_round"})
    if (!j.contains(key)) throw ConfigError(std::string("summary: missing key ") + key);
  SummaryRow row;
  row.algorithm = j["algorithm"].get<std::string>();
  row.global_acc_mean = j["final_global_acc"]["mean"].get<double>();
  row.global_acc_var = j["final_global_acc"]["variance"].get<double>();
  row.local_acc_mean = j["final_local_acc"]["mean"].get<double>();
  row.local_acc_var = j["final_local_acc"]["variance"].get<double>();
  row.equilibrium_round_mean = j["equilibrium_round"]["mean"].get<double>();
  return row;
}

struct ComparisonTable {
  std::vector<SummaryRow> rows;
  // improvement of the page row over the best baseline, percent; only
  // meaningful when both a page row and a baseline row are present
  bool has_improvement = false;
  double improvement_global_pct = 0.0;
  double improvement_local_pct = 0.0;
};

inline ComparisonTable build_comparison(const std::vector<SummaryRow>& rows) {
  ComparisonTable table;
  table.rows = rows;
  const SummaryRow* page_row = nullptr;
  const SummaryRow* best_baseline = nullptr;
  for (const auto& r : table.rows) {
    if (r.algorithm == "page") {
      if (!page_row) page_row = &r;
    } else if (!best_baseline || r.global_acc_mean > best_baseline->global_acc_mean) {
      best_baseline = &r;
    }
  }
  if (page_row && best_baseline && best_baseline->global_acc_mean > 0.0 &&
      best_baseline->local_acc_mean > 0.0) {
    table.has_improvement = true;
    table.improvement_global_pct =
        (page_row->global_acc_mean - best_baseline->global_acc_mean) /
        best_baseline->global_acc_mean * 100.0;
    table.improvement_local_pct =
        (page_row->local_acc_mean - best_baseline->local_acc_mean) /
        best_baseline->local_acc_mean * 100.0;
  }
  return table;
}

inline void write_comparison_csv(std::ostream& os, const ComparisonTable& table) {
  os << "algorithm,global_acc_mean,global_acc_var,local_acc_mean,local_acc_var,"
        "equilibrium_round_mean,improvement_global_pct,improvement_local_pct\n";
  for (const auto& r : table.rows) {
    os << r.algorithm << ',' << format_double(r.global_acc_mean) << ','
       << format_double(r.global_acc_var) << ',' << format_double(r.local_acc_mean) << ','
       << format_double(r.local_acc_var) << ',' << format_double(r.equilibrium_round_mean);
    if (r.algorithm == "page" && table.has_improvement)
      os << ',' << format_double(table.improvement_global_pct) << ','
         << format_double(table.improvement_local_pct);
    else
      os << ",,";
    os << "\n";
  }
}

inline void write_comparison_text(std::ostream& os, const ComparisonTable& table) {
  os << "algorithm      global acc (mean +- var)   local acc (mean +- var)   eq. round\n";
  char line[160];
  for (const auto& r : table.rows) {
    std::snprintf(line, sizeof(line), "%-14s %7.4f +- %-12.6f   %7.4f +- %-12.6f   %8.1f\n",
                  r.algorithm.c_str(), r.global_acc_mean, r.global_acc_var, r.local_acc_mean,
                  r.local_acc_var, r.equilibrium_round_mean);
    os << line;
  }
  if (table.has_improvement) {
    std::snprintf(line, sizeof(line),
                  "page vs best baseline: global %+.2f%%, local %+.2f%%\n",
                  table.improvement_global_pct, table.improvement_local_pct);
    os << line;
  }
}

}  // namespace page
