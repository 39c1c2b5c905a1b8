// Runs the eight acceptance checks and prints one PASS/FAIL line for each.
// Exit status is the number of failed checks.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "oracles.hpp"
#include "support.hpp"

using namespace rbx;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void verdict(int id, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  failures += ok ? 0 : 1;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Random walk to a state, save, continue with a recorded action tail, wander
// off, restore and replay the tail: observations and snapshots must repeat.
void persistence() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<PersiaLite> levels = {rbx::testing::load_bundled("L1"), PersiaLite::load(rbx::testing::kTwinRooms),
                                    PersiaLite::load(rbx::testing::kAllTiles)};
  Rng rng(2024);
  int identical = 0;
  const int trials = 1000;
  auto random_action = [&] { return static_cast<Action>(uniform_index(rng, kActionCount)); };
  for (int k = 0; k < trials; ++k) {
    PersiaLite& env = levels[static_cast<std::size_t>(k) % levels.size()];
    env.reset();
    for (std::size_t s = 0, n = uniform_index(rng, 200); s < n; ++s)
      if (env.step(random_action()).terminated) env.reset();
    const Snapshot saved = env.save_snapshot();
    std::vector<Action> tail;
    std::vector<Observation> first_obs;
    std::vector<Snapshot> first_snaps;
    for (std::size_t s = 0, n = 1 + uniform_index(rng, 50); s < n; ++s) {
      tail.push_back(random_action());
      const auto r = env.step(tail.back());
      first_obs.push_back(r.observation);
      first_snaps.push_back(env.save_snapshot());
      if (r.terminated) break;
    }
    env.reset();
    for (int s = 0; s < 30; ++s)
      if (env.step(random_action()).terminated) env.reset();
    bool same = env.restore_snapshot(saved).terminated == false && env.save_snapshot() == saved;
    for (std::size_t s = 0; same && s < tail.size(); ++s) {
      const auto r = env.step(tail[s]);
      same = r.observation == first_obs[s] && env.save_snapshot() == first_snaps[s];
    }
    identical += same;
  }
  const double secs = seconds_since(t0);
  verdict(1, identical == trials && secs < 10.0, fmt("%d/%d round-trips identical in %.2f s", identical, trials, secs));
}

void gradients() {
  int probes_sim = 0, probes_rnd = 0;
  double worst_sim = 0, worst_rnd = 0;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const auto s = rbx::testing::similarity_gradient_probes(seed, 10, 6);
    const auto r = rbx::testing::rnd_gradient_probes(seed, 10, 7);
    probes_sim += s.probes, probes_rnd += r.probes;
    worst_sim = std::max(worst_sim, s.max_relative_error);
    worst_rnd = std::max(worst_rnd, r.max_relative_error);
  }
  verdict(2, probes_sim >= 50 && probes_rnd >= 50 && worst_sim < 1e-3 && worst_rnd < 1e-3,
          fmt("similarity %d probes max rel err %.2e; RND %d probes max rel err %.2e", probes_sim, worst_sim,
              probes_rnd, worst_rnd));
}

void pair_partition() {
  const auto s = rbx::testing::pair_partition_check(77, 100, 5, 25);
  verdict(3, s.emitted > 0 && s.wrong_label == 0 && s.gray_zone == 0,
          fmt("%zu pairs from 100 trajectories, %zu mislabelled, %zu in the gray zone", s.emitted, s.wrong_label,
              s.gray_zone));
}

void oracle_graph() {
  const auto env = rbx::testing::load_bundled("L1");
  const auto full = reachable_units(env.level());
  int good = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    RbConfig c;
    c.seed = seed;
    c.clusters_per_iteration = 10;
    c.max_rollout_steps = 100;
    c.merge_every = 3;
    Explorer<PersiaLite> ex(env, c, full, SimilarityMode::Oracle);
    ex.run(2000 + 1000 * seed);
    ClusterGraph copy = ex.graph();
    const PersiaLite probe = env;
    auto unit_of = [probe](const Snapshot& s) { return probe.unit_of_snapshot(s); };
    UnitOracleScorer<decltype(unit_of)> scorer(unit_of);
    bool ok = copy.size() == ex.visited_units().size() && merge_pass(copy, scorer, c.theta_merge) == 0;
    try {
      ex.graph().check_invariants();
    } catch (const std::exception&) {
      ok = false;
    }
    good += ok;
  }
  verdict(4, good == 20, fmt("%d/20 oracle runs: clusters == visited units, merge no-op, invariants hold", good));
}

struct Variant {
  std::string name;
  Algorithm algo;
  std::vector<std::string> overrides;
};

std::map<std::string, std::vector<double>> run_variants(const ExperimentConfig& base, const std::vector<Variant>& variants,
                                                        const fs::path& runs_dir) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& v : variants)
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      ExperimentConfig cfg = base;
      cfg.algo = v.algo;
      cfg.rb.seed = seed;
      for (const auto& kv : v.overrides) {
        const auto eq = kv.find('=');
        set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
      }
      const auto t0 = std::chrono::steady_clock::now();
      const auto rec = run_experiment(cfg, runs_dir / (v.name + "-s" + std::to_string(seed)));
      std::printf("  %-14s seed %llu: %6.2f%% coverage, %4zu clusters, %.1f s\n", v.name.c_str(),
                  static_cast<unsigned long long>(seed), rec.final_coverage, rec.final_clusters, seconds_since(t0));
      std::fflush(stdout);
      out[v.name].push_back(rec.final_coverage);
    }
  return out;
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

void bracketing_and_ablations(const ExperimentConfig& base, const fs::path& runs_dir) {
  const std::vector<Variant> variants = {
      {"random", Algorithm::Random, {}},
      {"full", Algorithm::RbExplore, {}},
      {"oracle", Algorithm::RbExploreOracle, {}},
      {"no-merge", Algorithm::RbExplore, {"no_merge=true"}},
      {"no-prefix", Algorithm::RbExplore, {"no_prefix_negatives=true"}},
      {"merge-0.25", Algorithm::RbExplore, {"theta_merge=0.25"}},
      {"merge-0.75", Algorithm::RbExplore, {"theta_merge=0.75"}},
  };
  std::printf("coverage runs on %s, budget %lld env steps\n", base.level.c_str(), static_cast<long long>(base.budget));
  const auto cov = run_variants(base, variants, runs_dir);

  int bracketed = 0;
  for (std::size_t s = 0; s < 3; ++s)
    bracketed += cov.at("random")[s] < cov.at("full")[s] && cov.at("full")[s] <= cov.at("oracle")[s] &&
                 cov.at("oracle")[s] >= 95.0;
  std::string detail = fmt("%d/3 seeds with random < learned <= oracle and oracle >= 95%%;", bracketed);
  for (const char* v : {"random", "full", "oracle"})
    detail += fmt(" %s [%.2f %.2f %.2f]", v, cov.at(v)[0], cov.at(v)[1], cov.at(v)[2]);
  verdict(5, bracketed == 3, detail);

  std::printf("  variant        mean coverage   (3 seeds)\n");
  for (const auto& v : variants) std::printf("  %-14s %8.2f%%\n", v.name.c_str(), mean(cov.at(v.name)));
  const double full = mean(cov.at("full"));
  std::vector<std::string> broken;
  for (const char* other : {"no-merge", "no-prefix", "merge-0.25", "merge-0.75"})
    if (full < mean(cov.at(other))) broken.push_back(other);
  std::string summary = broken.empty() ? "full (theta_merge 0.5) >= every ablation mean" : "full mean below:";
  for (const auto& b : broken) summary += fmt(" %s (%.2f vs %.2f)", b.c_str(), mean(cov.at(b)), full);
  verdict(6, broken.empty(), summary);
}

void determinism(const ExperimentConfig& base, const fs::path& runs_dir) {
  ExperimentConfig cfg = base;
  cfg.algo = Algorithm::RbExplore;
  cfg.rb.seed = 1;
  cfg.rb.threads = 1;
  run_experiment(cfg, runs_dir / "repeat-s1");
  const std::string a = read_text_file(runs_dir / "full-s1" / "metrics.csv");
  const std::string b = read_text_file(runs_dir / "repeat-s1" / "metrics.csv");
  verdict(7, a == b && !a.empty(), fmt("metrics.csv of two seed-1 runs: %zu vs %zu bytes, %s", a.size(), b.size(),
                                       a == b ? "identical" : "different"));
}

void sampling() {
  ClusterGraph g(Observation(1, 1, {0.0F}), {});
  const std::vector<std::uint64_t> visits = {0, 1, 3, 7, 20};
  g.cluster(0).visit_count = visits[0];
  for (std::size_t k = 1; k < visits.size(); ++k) {
    const auto id = g.add_cluster(Observation(1, 1, {static_cast<float>(k)}), {}, 0, {Observation(1, 1, {0.0F})}, 1);
    g.cluster(id).visit_count = visits[k];
  }
  Rng rng(8);
  const auto fit = rbx::testing::inverse_visit_fit(g, 100'000, rng);
  verdict(8, fit.p_value > 0.01, fmt("chi-square %.3f on 4 dof, p = %.4f over 1e5 draws", fit.statistic, fit.p_value));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string config = (rbx::testing::source_dir() / "configs" / "l1_desk.cfg").string();
  std::string runs = "acceptance_runs";
  std::int64_t budget = 0;
  app.add_option("--config", config, "config for the coverage experiments")->check(CLI::ExistingFile);
  app.add_option("--runs", runs, "directory for experiment outputs");
  app.add_option("--budget", budget, "override the config budget");
  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig base = load_config(config);
    if (budget > 0) base.budget = budget;
    fs::create_directories(runs);
    persistence();
    gradients();
    pair_partition();
    oracle_graph();
    bracketing_and_ablations(base, runs);
    determinism(base, runs);
    sampling();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "acceptance aborted: %s\n", e.what());
    return 100;
  }
  std::printf("%d of 8 criteria failed\n", failures);
  return failures;
}
