// rbx: run explorations, render coverage maps and summarize seeds.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rbx/harness.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::optional<std::string>& algo,
            const std::optional<std::uint64_t>& seed, const std::optional<std::int64_t>& budget, std::string out,
            bool no_merge, bool no_prefix, const std::optional<double>& theta_merge,
            const std::vector<std::string>& sets, bool quiet) {
  rbx::ExperimentConfig cfg = rbx::load_config(config_path);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw rbx::ConfigError("--set expects key=value, got '" + kv + "'");
    rbx::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (algo) cfg.algo = rbx::algorithm_from_name(*algo);
  if (seed) cfg.rb.seed = *seed;
  if (budget) cfg.budget = *budget;
  if (no_merge) cfg.rb.no_merge = true;
  if (no_prefix) cfg.rb.no_prefix_negatives = true;
  if (theta_merge) cfg.rb.theta_merge = *theta_merge;
  if (out.empty()) out = "runs/" + rbx::algorithm_name(cfg.algo) + "-s" + std::to_string(cfg.rb.seed);

  const auto rec = rbx::run_experiment(cfg, out);
  if (!quiet)
    std::printf("%s seed %llu: %zu iterations, %llu env steps, coverage %.2f%% of %zu units -> %s\n",
                rbx::algorithm_name(cfg.algo).c_str(), static_cast<unsigned long long>(rec.seed), rec.rows.size(),
                static_cast<unsigned long long>(rec.rows.empty() ? 0 : rec.rows.back().env_steps),
                rec.final_coverage, rec.full_units, out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rollback exploration on PersiaLite levels"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run one exploration or baseline");
  std::string config_path, out;
  std::optional<std::string> algo;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> budget;
  std::optional<double> theta_merge;
  bool no_merge = false, no_prefix = false, quiet = false;
  std::vector<std::string> sets;
  run->add_option("--config", config_path, "key=value config file")->required()->check(CLI::ExistingFile);
  run->add_option("--algo", algo, "rbexplore | random | rbexplore-oracle");
  run->add_option("--seed", seed, "seed for every random stream");
  run->add_option("--budget", budget, "total environment steps");
  run->add_option("--out", out, "output directory (default runs/<algo>-s<seed>)");
  run->add_flag("--no-merge", no_merge, "disable merge passes");
  run->add_flag("--no-prefix-negatives", no_prefix, "disable full-prefix negative pairs");
  run->add_option("--theta-merge", theta_merge, "merge threshold");
  run->add_option("--set", sets, "override any config key (key=value), repeatable");
  run->add_flag("-q,--quiet", quiet, "no summary line");

  auto* map = app.add_subcommand("map", "render coverage.pgm for a run directory");
  std::string map_dir;
  map->add_option("--run", map_dir, "run directory")->required()->check(CLI::ExistingDirectory);

  auto* summ = app.add_subcommand("summarize", "per-checkpoint mean/min/max coverage across runs");
  std::vector<std::string> run_dirs;
  std::string summary_out = "summary.csv";
  int checkpoints = 20;
  summ->add_option("--runs", run_dirs, "run directories")->required()->check(CLI::ExistingDirectory);
  summ->add_option("--out", summary_out, "output CSV path");
  summ->add_option("--checkpoints", checkpoints, "number of evenly spaced checkpoints");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, algo, seed, budget, out, no_merge, no_prefix, theta_merge, sets, quiet);
    if (*map) {
      std::printf("%s\n", rbx::render_coverage_map(map_dir).string().c_str());
      return 0;
    }
    if (*summ) {
      std::vector<rbx::fs::path> dirs(run_dirs.begin(), run_dirs.end());
      rbx::write_file(summary_out, rbx::summarize_runs(dirs, checkpoints));
      std::printf("%s\n", summary_out.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "rbx: %s\n", e.what());
    return 1;
  }
  return 0;
}
