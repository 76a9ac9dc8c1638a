#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "page/config.hpp"
#include "page/orchestrator.hpp"
#include "page/reporting.hpp"

namespace page {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitIo = 3 };

namespace detail {

inline std::string utc_now_string() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os << text;
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace detail

struct RunArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> algorithm;
  std::string out_dir = "out";
  std::optional<std::string> checkpoint_path;  // enables checkpointing of run 0
  bool timing = false;
};

/**
 * Loads a config, runs the configured number of replicated experiments and
 * writes per-round CSVs, summary.json and manifest.json into the output
 * directory. Exit codes: 0 ok, 2 config/usage, 3 I/O.
 */
inline int cmd_run(const RunArgs& args, std::ostream& log = std::cout,
                   std::ostream& err = std::cerr) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(args.config_path);
    if (args.algorithm) cfg.algorithm = detail::parse_algorithm(*args.algorithm, "--algo");
    if (args.seed) cfg.master_seed = *args.seed;
    if (args.timing) cfg.timing = true;
    cfg.validate();
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  const std::string started = detail::utc_now_string();
  ReplicatedResult result;
  try {
    result = run_replicated(cfg);
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "run failed: " << e.what() << "\n";
    return kExitIo;
  }

  try {
    const std::filesystem::path out(args.out_dir);
    std::filesystem::create_directories(out);
    std::vector<std::string> outputs;
    for (std::size_t k = 0; k < result.runs.size(); ++k) {
      const std::string name = "rounds_run" + std::to_string(k) + ".csv";
      detail::write_text_file(out / name, rounds_csv_string(result.runs[k].history));
      outputs.push_back(name);
      if (cfg.algorithm == Algorithm::kPage) {
        const std::string actions = "actions_run" + std::to_string(k) + ".csv";
        std::ostringstream os;
        write_actions_csv(os, result.runs[k].history);
        detail::write_text_file(out / actions, os.str());
        outputs.push_back(actions);
      }
    }
    const nlohmann::json summary = summary_to_json(cfg, result);
    detail::write_text_file(out / "summary.json", summary.dump(2) + "\n");
    outputs.push_back("summary.json");

    if (args.checkpoint_path) {
      Checkpoint ck;
      ck.config_json = config_to_json(cfg).dump();
      ck.run_seed = result.seeds.front();
      ck.global_model = result.runs.front().global_model;
      ck.local_models = result.runs.front().local_models;
      ck.agent_blobs = result.runs.front().agent_blobs;
      std::ofstream os(*args.checkpoint_path, std::ios::binary);
      if (!os) throw std::runtime_error("cannot open for writing: " + *args.checkpoint_path);
      save_checkpoint(ck, os);
      if (!os) throw std::runtime_error("write failed: " + *args.checkpoint_path);
    }

    const nlohmann::json manifest =
        manifest_to_json(cfg, result.seeds, outputs, started, detail::utc_now_string());
    detail::write_text_file(out / "manifest.json", manifest.dump(2) + "\n");

    log << "algorithm " << detail::algorithm_name(cfg.algorithm) << ": " << result.runs.size()
        << " run(s), final global acc " << format_double(result.final_global_acc.mean)
        << ", final local acc " << format_double(result.final_local_acc.mean)
        << ", equilibrium round " << format_double(result.equilibrium_round.mean) << "\n";
    log << "outputs written to " << out.string() << "\n";
  } catch (const std::exception& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}

/**
 * Builds the comparison table from two or more summary.json files, prints a
 * human-readable table and writes a CSV next to it.
 */
inline int cmd_compare(const std::vector<std::string>& summary_paths, const std::string& out_csv,
                       std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  if (summary_paths.size() < 2) {
    err << "compare: need at least two summaries\n";
    return kExitConfig;
  }
  std::vector<SummaryRow> rows;
  try {
    for (const auto& path : summary_paths) {
      std::ifstream is(path);
      if (!is) throw ConfigError("cannot open summary: " + path);
      nlohmann::json j;
      try {
        is >> j;
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("summary parse error in " + path + ": " + e.what());
      }
      rows.push_back(summary_row_from_json(j));
    }
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  const ComparisonTable table = build_comparison(rows);
  write_comparison_text(log, table);
  try {
    std::ofstream os(out_csv, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + out_csv);
    write_comparison_csv(os, table);
    if (!os) throw std::runtime_error("write failed: " + out_csv);
  } catch (const std::exception& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}

struct FseArgs {
  std::string checkpoint_path;
  int probes = 100;
  int horizon = 10;
  std::string out_path = "fse_report.json";
};

/**
 * Replays a checkpointed adaptive run under frozen policies, probing random
 * unilateral single-stage deviations, and reports whether any player could
 * profit. Prints the JSON report and writes it to the output path.
 */
inline int cmd_fse_check(const FseArgs& args, std::ostream& log = std::cout,
                         std::ostream& err = std::cerr) {
  Checkpoint ck;
  ExperimentConfig cfg;
  try {
    std::ifstream is(args.checkpoint_path, std::ios::binary);
    if (!is) throw ConfigError("cannot open checkpoint: " + args.checkpoint_path);
    ck = load_checkpoint(is);
    cfg = load_config_string(ck.config_json);
    if (args.probes < 0) throw ConfigError("--probes must be >= 0");
    if (args.horizon < 1) throw ConfigError("--horizon must be >= 1");
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  FseReport report;
  try {
    PageReplayer replayer(cfg, ck, args.horizon);
    FseDiagnosticConfig diag;
    diag.probes = args.probes;
    diag.gamma = cfg.server_agent.gamma;
    diag.seed = derive_seed(ck.run_seed, seed_tags::kFseReplay, 0xf5e);
    report = fse_diagnostic(replayer, diag);
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  const std::string text = report.to_json().dump(2) + "\n";
  log << text;
  try {
    detail::write_text_file(args.out_path, text);
  } catch (const std::exception& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}

}  // namespace page
