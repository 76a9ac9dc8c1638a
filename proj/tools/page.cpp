#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "page/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"PAGE federated-learning simulator"};
  app.require_subcommand(1);

  page::RunArgs run_args;
  std::uint64_t seed_opt = 0;
  std::string algo_opt, checkpoint_opt;
  auto* run = app.add_subcommand("run", "run an experiment from a JSON config");
  run->add_option("--config", run_args.config_path, "config file path")->required();
  auto* seed_flag = run->add_option("--seed", seed_opt, "override the master seed");
  auto* algo_flag =
      run->add_option("--algo", algo_opt, "override the algorithm (page|fedavg|fedprox)");
  run->add_option("--out", run_args.out_dir, "output directory (default: out)");
  auto* ck_flag = run->add_option("--checkpoint", checkpoint_opt,
                                  "write a checkpoint of the first run to this path");
  run->add_flag("--timing", run_args.timing,
                "record per-round wall time (breaks byte-identical reruns)");

  std::vector<std::string> summaries;
  std::string compare_out = "comparison.csv";
  auto* compare = app.add_subcommand("compare", "compare two or more summary.json files");
  compare->add_option("summaries", summaries, "summary.json paths")->expected(-2);
  compare->add_option("--out", compare_out, "comparison CSV path (default: comparison.csv)");

  page::FseArgs fse_args;
  auto* fse = app.add_subcommand("fse-check", "probe a checkpoint for profitable deviations");
  fse->add_option("--checkpoint", fse_args.checkpoint_path, "checkpoint file from run --checkpoint")
      ->required();
  fse->add_option("--probes", fse_args.probes, "number of random probes (default: 100)");
  fse->add_option("--horizon", fse_args.horizon, "replay length in rounds (default: 10)");
  fse->add_option("--out", fse_args.out_path, "report path (default: fse_report.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : page::kExitConfig;
  }

  if (run->parsed()) {
    if (seed_flag->count() > 0) run_args.seed = seed_opt;
    if (algo_flag->count() > 0) run_args.algorithm = algo_opt;
    if (ck_flag->count() > 0) run_args.checkpoint_path = checkpoint_opt;
    return page::cmd_run(run_args);
  }
  if (compare->parsed()) return page::cmd_compare(summaries, compare_out);
  if (fse->parsed()) return page::cmd_fse_check(fse_args);
  return page::kExitConfig;
}
