#include <gtest/gtest.h>

#include <filesystem>

#include "support.hpp"

using namespace rbx;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("rbx_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig small_experiment(Algorithm algo, std::int64_t budget) {
  ExperimentConfig c;
  c.level = (rbx::testing::source_dir() / "levels" / "L1.lvl").string();
  c.algo = algo;
  c.budget = budget;
  c.rb.clusters_per_iteration = 4;
  c.rb.max_rollout_steps = 50;
  c.rb.novel_rollouts = 2;
  c.rb.pretrain_steps = 0;
  c.rb.train.epochs = 1;
  c.rb.seed = 3;
  return c;
}

CoverageCurve flat_curve(std::uint64_t budget, double value) { return {budget, {{budget, value}}}; }

std::size_t count_bytes(const std::string& pgm, unsigned char v) {
  const auto body = pgm.find("255\n") + 4;
  return static_cast<std::size_t>(std::count(pgm.begin() + static_cast<std::ptrdiff_t>(body), pgm.end(),
                                             static_cast<char>(v)));
}

}  // namespace

TEST(Config, UnknownKeySuggestsClosest) {
  ExperimentConfig c;
  try {
    set_config_value(c, "thetasim", "0.4");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("theta_sim"), std::string::npos) << e.what();
  }
}

TEST(Config, ValuesRoundTripThroughCanonicalText) {
  ExperimentConfig c;
  apply_config_text(c, "# comment\ntheta_sim = 0.4\nL = 7\nno_merge = true\nalgo = random\n\nbudget=1234\n");
  EXPECT_DOUBLE_EQ(c.rb.theta_sim, 0.4);
  EXPECT_EQ(c.rb.novel_rollouts, 7);
  EXPECT_TRUE(c.rb.no_merge);
  EXPECT_EQ(c.algo, Algorithm::Random);
  EXPECT_EQ(c.budget, 1234);
  ExperimentConfig back;
  apply_config_text(back, canonical_config(c));
  EXPECT_EQ(canonical_config(back), canonical_config(c));
  EXPECT_THROW(apply_config_text(back, "theta_sim 0.4\n"), ConfigError);
  EXPECT_THROW(apply_config_text(back, "L = seven\n"), ConfigError);
}

TEST(Config, BundledConfigLoads) {
  const auto c = load_config(rbx::testing::source_dir() / "configs" / "l1_desk.cfg");
  EXPECT_TRUE(fs::exists(c.level)) << c.level;
  EXPECT_NO_THROW(c.rb.validate());
}

TEST(Run, MetricsSchema) {
  const auto dir = scratch("schema");
  const auto rec = run_experiment(small_experiment(Algorithm::RbExplore, 1500), dir);
  const std::string csv = read_text_file(dir / "metrics.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kMetricsHeader);
  const auto curve = read_coverage_curve(dir);
  ASSERT_EQ(curve.points.size(), rec.rows.size());
  EXPECT_EQ(curve.points.back().first, 1500U);
  for (std::size_t k = 1; k < curve.points.size(); ++k) {
    EXPECT_GT(curve.points[k].first, curve.points[k - 1].first);
    EXPECT_GE(curve.points[k].second, curve.points[k - 1].second);
  }
  for (const char* f : {"run.json", "coverage.pgm", "graph.json", "graph.bin"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  const auto doc = read_run_json(dir);
  EXPECT_EQ(doc.at("full_units").get<std::size_t>(), 151U);
  EXPECT_EQ(doc.at("config_hash").get<std::string>(), rec.config_hash);
  EXPECT_EQ(load_graph(dir / "graph.json").size(), rec.final_clusters);
  fs::remove_all(dir);
}

TEST(Run, NonPositiveBudgetRejected) {
  const auto dir = scratch("budget");
  EXPECT_THROW(run_experiment(small_experiment(Algorithm::Random, 0), dir), ConfigError);
  EXPECT_THROW(run_experiment(small_experiment(Algorithm::Random, -5), dir), ConfigError);
  fs::remove_all(dir);
}

TEST(Run, SameConfigSameCsv) {
  const auto a = scratch("same_a"), b = scratch("same_b");
  run_experiment(small_experiment(Algorithm::RbExplore, 1200), a);
  run_experiment(small_experiment(Algorithm::RbExplore, 1200), b);
  EXPECT_EQ(read_text_file(a / "metrics.csv"), read_text_file(b / "metrics.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Summary, SingleRun) {
  const auto rows = summarize({CoverageCurve{100, {{50, 10.0}, {100, 40.0}}}}, 2);
  ASSERT_EQ(rows.size(), 2U);
  EXPECT_EQ(rows[0].env_steps, 50U);
  EXPECT_DOUBLE_EQ(rows[0].mean, 10.0);
  EXPECT_DOUBLE_EQ(rows[1].mean, 40.0);
  EXPECT_DOUBLE_EQ(rows[1].min, rows[1].max);
}

TEST(Summary, MeanMinMax) {
  const auto rows = summarize({flat_curve(90, 10), flat_curve(90, 20), flat_curve(90, 30)}, 3);
  EXPECT_DOUBLE_EQ(rows.back().mean, 20.0);
  EXPECT_DOUBLE_EQ(rows.back().min, 10.0);
  EXPECT_DOUBLE_EQ(rows.back().max, 30.0);
  EXPECT_DOUBLE_EQ(rows.front().mean, 0.0);  // nothing recorded before step 30
  const auto csv = summary_csv(rows, 3);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "checkpoint,env_steps,runs,mean_coverage_pct,min_coverage_pct,max_coverage_pct");
}

TEST(Summary, MisalignedBudgets) {
  EXPECT_THROW(summarize({flat_curve(100, 1), flat_curve(200, 1)}), ConfigError);
  EXPECT_THROW(summarize({}), ConfigError);
}

TEST(Summary, FromRunDirectories) {
  const auto a = scratch("sum_a"), b = scratch("sum_b");
  auto cfg = small_experiment(Algorithm::Random, 2000);
  run_experiment(cfg, a);
  cfg.rb.seed = 4;
  run_experiment(cfg, b);
  const std::string csv = summarize_runs({a, b}, 4);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  cfg.budget = 1000;
  run_experiment(cfg, b);
  EXPECT_THROW(summarize_runs({a, b}, 4), ConfigError);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Map, VisitedTilesAreWhite) {
  const auto env = rbx::testing::load_bundled("L1");
  const auto full = reachable_units(env.level());
  const int block = 4;
  EXPECT_EQ(count_bytes(coverage_map_pgm(env.level(), {}, block), 255), 0U);
  const auto all = coverage_map_pgm(env.level(), full, block);
  EXPECT_EQ(count_bytes(all, 255), full.size() * block * block);
  EXPECT_EQ(all, coverage_map_pgm(env.level(), full, block));
  EXPECT_EQ(all.substr(0, all.find("255\n")),
            "P5\n" + std::to_string(env.level().cols() * block) + " " + std::to_string(env.level().rows() * block) + "\n");
}

TEST(Map, RenderFromRunDirectory) {
  const auto dir = scratch("map");
  run_experiment(small_experiment(Algorithm::Random, 500), dir);
  const std::string first = read_text_file(dir / "coverage.pgm");
  fs::remove(dir / "coverage.pgm");
  render_coverage_map(dir);
  EXPECT_EQ(read_text_file(dir / "coverage.pgm"), first);
  fs::remove_all(dir);
}

TEST(RandomBaseline, OneStepBudget) {
  const auto env = rbx::testing::load_bundled("L1");
  Rng rng(1);
  const auto r = random_baseline(env, reachable_units(env.level()), 1, 100, rng);
  EXPECT_EQ(r.env_steps, 1U);
  ASSERT_EQ(r.reports.size(), 1U);
  EXPECT_EQ(r.reports[0].env_steps, 1U);
  EXPECT_THROW(random_baseline(env, reachable_units(env.level()), 0, 100, rng), ContractViolation);
}

TEST(RandomBaseline, CoversSmallRoom) {
  const auto env = PersiaLite::load("#####\n#I..#\n#...#\n#...#\n#####\n");
  const auto full = reachable_units(env.level());
  EXPECT_EQ(full.size(), 9U);
  Rng rng(2);
  const auto r = random_baseline(env, full, 10000, 200, rng);
  EXPECT_DOUBLE_EQ(coverage(r.visited, full), 100.0);
}

TEST(Ablation, NoMergeNeverHasFewerClusters) {
  std::size_t merged_away = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto cfg = small_experiment(Algorithm::RbExplore, 0).rb;
    cfg.seed = seed;
    cfg.clusters_per_iteration = 2;
    cfg.max_rollout_steps = 25;
    cfg.novel_rollouts = 0;
    auto off = cfg;
    off.no_merge = true;
    const auto env = rbx::testing::load_bundled("L1");
    const auto full = reachable_units(env.level());
    Explorer<PersiaLite> merged(env, cfg, full), unmerged(env, off, full);
    for (int it = 0; it < cfg.merge_every; ++it) {
      merged.run_iteration(cfg.theta_sim, false, 1'000'000);
      unmerged.run_iteration(cfg.theta_sim, false, 1'000'000);
    }
    EXPECT_GE(unmerged.graph().size(), merged.graph().size()) << "seed " << seed;
    merged_away += unmerged.graph().size() - merged.graph().size();
  }
  EXPECT_GT(merged_away, 0U);
}
