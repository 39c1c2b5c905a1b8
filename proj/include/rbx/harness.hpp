#pragma once

// Experiment plumbing: flat key=value configs, single runs with incremental
// metrics, the episodic random-walk baseline, coverage maps and multi-seed
// summaries.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rbx/errors.hpp"
#include "rbx/explorer.hpp"
#include "rbx/graph_io.hpp"
#include "rbx/persia_lite.hpp"
#include "rbx/rng.hpp"

namespace rbx {

namespace fs = std::filesystem;

inline constexpr const char* kMetricsHeader =
    "iteration,env_steps,clusters,merges,novel_flagged,sim_loss,rnd_loss,coverage_pct";

enum class Algorithm { RbExplore, Random, RbExploreOracle };

inline std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::RbExplore: return "rbexplore";
    case Algorithm::Random: return "random";
    case Algorithm::RbExploreOracle: return "rbexplore-oracle";
  }
  return "?";
}

inline Algorithm algorithm_from_name(const std::string& s) {
  if (s == "rbexplore") return Algorithm::RbExplore;
  if (s == "random") return Algorithm::Random;
  if (s == "rbexplore-oracle") return Algorithm::RbExploreOracle;
  throw ConfigError("unknown algorithm '" + s + "' (expected rbexplore, random or rbexplore-oracle)");
}

struct ExperimentConfig {
  std::string level;  // path; relative paths resolve against the config file
  std::int64_t budget = 200'000;
  Algorithm algo = Algorithm::RbExplore;
  int random_episode_steps = 0;        // 0: use max_rollout_steps
  std::int64_t random_report_every = 0;  // 0: M * max_rollout_steps
  RbConfig rb;
};

inline std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] != b[j - 1] ? 1 : 0)});
      diag = up;
    }
  }
  return row[b.size()];
}

namespace detail {

template <class T>
T parse_integer(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || !std::isfinite(out))
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

inline std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class T, class Member>
Field integer_field(const std::string& key, Member member) {
  return {[key, member](ExperimentConfig& c, const std::string& v) { member(c) = parse_integer<T>(key, v); },
          [member](const ExperimentConfig& c) { return std::to_string(member(const_cast<ExperimentConfig&>(c))); }};
}

template <class Member>
Field real_field(const std::string& key, Member member) {
  return {[key, member](ExperimentConfig& c, const std::string& v) { member(c) = parse_real(key, v); },
          [member](const ExperimentConfig& c) { return format_real(member(const_cast<ExperimentConfig&>(c))); }};
}

template <class Member>
Field bool_field(const std::string& key, Member member) {
  return {[key, member](ExperimentConfig& c, const std::string& v) { member(c) = parse_bool(key, v); },
          [member](const ExperimentConfig& c) {
            return std::string(member(const_cast<ExperimentConfig&>(c)) ? "true" : "false");
          }};
}

// Every addressable key, in canonical order.
inline const std::map<std::string, Field>& config_fields() {
  using C = ExperimentConfig;
  static const std::map<std::string, Field> fields = [] {
    std::map<std::string, Field> f;
    f["level"] = {[](C& c, const std::string& v) { c.level = v; }, [](const C& c) { return c.level; }};
    f["algo"] = {[](C& c, const std::string& v) { c.algo = algorithm_from_name(v); },
                 [](const C& c) { return algorithm_name(c.algo); }};
    f["budget"] = integer_field<std::int64_t>("budget", [](C& c) -> auto& { return c.budget; });
    f["random_episode_steps"] =
        integer_field<int>("random_episode_steps", [](C& c) -> auto& { return c.random_episode_steps; });
    f["random_report_every"] =
        integer_field<std::int64_t>("random_report_every", [](C& c) -> auto& { return c.random_report_every; });
    f["seed"] = integer_field<std::uint64_t>("seed", [](C& c) -> auto& { return c.rb.seed; });
    f["theta_sim"] = real_field("theta_sim", [](C& c) -> auto& { return c.rb.theta_sim; });
    f["theta_merge"] = real_field("theta_merge", [](C& c) -> auto& { return c.rb.theta_merge; });
    f["merge_every"] = integer_field<int>("merge_every", [](C& c) -> auto& { return c.rb.merge_every; });
    f["M"] = integer_field<int>("M", [](C& c) -> auto& { return c.rb.clusters_per_iteration; });
    f["L"] = integer_field<int>("L", [](C& c) -> auto& { return c.rb.novel_rollouts; });
    f["n"] = integer_field<int>("n", [](C& c) -> auto& { return c.rb.close_steps; });
    f["N"] = integer_field<int>("N", [](C& c) -> auto& { return c.rb.far_steps; });
    f["beta_intrinsic"] = real_field("beta_intrinsic", [](C& c) -> auto& { return c.rb.beta_intrinsic; });
    f["max_rollout_steps"] =
        integer_field<int>("max_rollout_steps", [](C& c) -> auto& { return c.rb.max_rollout_steps; });
    f["pretrain_steps"] =
        integer_field<std::uint64_t>("pretrain_steps", [](C& c) -> auto& { return c.rb.pretrain_steps; });
    f["pairs_per_trajectory"] =
        integer_field<int>("pairs_per_trajectory", [](C& c) -> auto& { return c.rb.pairs_per_trajectory; });
    f["prefix_negatives_per_trajectory"] = integer_field<int>(
        "prefix_negatives_per_trajectory", [](C& c) -> auto& { return c.rb.prefix_negatives_per_trajectory; });
    f["side_pairs_per_trajectory"] = integer_field<int>(
        "side_pairs_per_trajectory", [](C& c) -> auto& { return c.rb.side_pairs_per_trajectory; });
    f["sim_epochs"] = integer_field<int>("sim_epochs", [](C& c) -> auto& { return c.rb.train.epochs; });
    f["sim_batch_size"] = integer_field<int>("sim_batch_size", [](C& c) -> auto& { return c.rb.train.batch_size; });
    f["sim_learning_rate"] = real_field("sim_learning_rate", [](C& c) -> auto& { return c.rb.train.learning_rate; });
    f["sim_momentum"] = real_field("sim_momentum", [](C& c) -> auto& { return c.rb.train.momentum; });
    f["sim_encoder_hidden"] =
        integer_field<int>("sim_encoder_hidden", [](C& c) -> auto& { return c.rb.similarity.encoder_hidden; });
    f["sim_embedding_dim"] =
        integer_field<int>("sim_embedding_dim", [](C& c) -> auto& { return c.rb.similarity.embedding_dim; });
    f["sim_head_hidden"] =
        integer_field<int>("sim_head_hidden", [](C& c) -> auto& { return c.rb.similarity.head_hidden; });
    f["rnd_hidden"] = integer_field<int>("rnd_hidden", [](C& c) -> auto& { return c.rb.rnd.hidden; });
    f["rnd_output"] = integer_field<int>("rnd_output", [](C& c) -> auto& { return c.rb.rnd.output; });
    f["rnd_learning_rate"] = real_field("rnd_learning_rate", [](C& c) -> auto& { return c.rb.rnd.learning_rate; });
    f["rnd_momentum"] = real_field("rnd_momentum", [](C& c) -> auto& { return c.rb.rnd.momentum; });
    f["rnd_batch_size"] = integer_field<int>("rnd_batch_size", [](C& c) -> auto& { return c.rb.rnd.batch_size; });
    f["rnd_obs_clip"] = real_field("rnd_obs_clip", [](C& c) -> auto& { return c.rb.rnd.obs_clip; });
    f["rnd_warmup_samples"] =
        integer_field<int>("rnd_warmup_samples", [](C& c) -> auto& { return c.rb.rnd.warmup_samples; });
    f["novelty_score"] = {
        [](C& c, const std::string& v) {
          if (v == "ratio") c.rb.rnd.score = NoveltyScore::Ratio;
          else if (v == "centered") c.rb.rnd.score = NoveltyScore::Centered;
          else throw ConfigError("config key 'novelty_score': expected ratio or centered, got '" + v + "'");
        },
        [](const C& c) { return std::string(c.rb.rnd.score == NoveltyScore::Ratio ? "ratio" : "centered"); }};
    f["novelty_capacity"] =
        integer_field<std::size_t>("novelty_capacity", [](C& c) -> auto& { return c.rb.novelty_capacity; });
    f["no_merge"] = bool_field("no_merge", [](C& c) -> auto& { return c.rb.no_merge; });
    f["no_prefix_negatives"] = bool_field("no_prefix_negatives", [](C& c) -> auto& { return c.rb.no_prefix_negatives; });
    f["pretrain_updates_rnd_predictor"] = bool_field(
        "pretrain_updates_rnd_predictor", [](C& c) -> auto& { return c.rb.pretrain_updates_rnd_predictor; });
    f["threads"] = integer_field<int>("threads", [](C& c) -> auto& { return c.rb.threads; });
    return f;
  }();
  return fields;
}

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, f] : detail::config_fields()) keys.push_back(k);
  return keys;
}

// Sets one key; unknown keys raise ConfigError naming the closest valid key and listing all of them.
inline void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
  const auto& fields = detail::config_fields();
  auto it = fields.find(key);
  if (it == fields.end()) {
    std::string best;
    std::size_t best_d = ~std::size_t{0};
    for (const auto& [k, f] : fields) {
      const std::size_t d = edit_distance(key, k);
      if (d < best_d) best_d = d, best = k;
    }
    std::string msg = "unknown config key '" + key + "' (did you mean '" + best + "'?); valid keys:";
    for (const auto& [k, f] : fields) msg += " " + k;
    throw ConfigError(msg);
  }
  it->second.set(c, value);
}

inline std::string get_config_value(const ExperimentConfig& c, const std::string& key) {
  const auto& fields = detail::config_fields();
  auto it = fields.find(key);
  if (it == fields.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second.get(c);
}

// Applies "key=value" lines; '#' starts a comment.
inline void apply_config_text(ExperimentConfig& c, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(number) + ": expected key=value");
    set_config_value(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
}

inline std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ExperimentConfig load_config(const fs::path& path) {
  ExperimentConfig c;
  apply_config_text(c, read_text_file(path));
  if (!c.level.empty() && fs::path(c.level).is_relative()) c.level = (path.parent_path() / c.level).lexically_normal().string();
  return c;
}

// Canonical "key=value" listing of every field, used for hashing and run records.
inline std::string canonical_config(const ExperimentConfig& c) {
  std::string out;
  for (const auto& [k, f] : detail::config_fields()) out += k + "=" + f.get(c) + "\n";
  return out;
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) h = (h ^ ch) * 1099511628211ULL;
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string format_metrics_row(const IterationReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%llu,%llu,%zu,%zu,%zu,%.6f,%.6f,%.4f",
                static_cast<unsigned long long>(r.iteration), static_cast<unsigned long long>(r.env_steps),
                r.clusters, r.merges, r.novel_flagged, r.sim_loss, r.rnd_loss, r.coverage_pct);
  return buf;
}

struct RandomBaselineResult {
  std::set<UnitId> visited;
  std::vector<IterationReport> reports;
  std::uint64_t env_steps = 0;
};

// Episodes from the initial state with uniform actions, ending on death or
// after `max_episode_steps`; snapshots are never used. A report is emitted
// every `report_every` steps and once at the end of the budget.
template <UnitAccounting Env>
RandomBaselineResult random_baseline(Env env, const std::set<UnitId>& full, std::uint64_t budget,
                                     std::size_t max_episode_steps, Rng& rng, std::uint64_t report_every = 0,
                                     const std::function<void(const IterationReport&)>& on_report = {}) {
  if (budget < 1) throw ContractViolation("budget must be positive");
  if (max_episode_steps < 1) throw ContractViolation("episodes need at least one step");
  if (report_every == 0) report_every = budget;
  RandomBaselineResult result;
  const UniformPolicy policy;
  auto emit = [&] {
    IterationReport r;
    r.iteration = result.reports.size() + 1;
    r.env_steps = result.env_steps;
    r.coverage_pct = coverage(result.visited, full);
    result.reports.push_back(r);
    if (on_report) on_report(r);
  };
  while (result.env_steps < budget) {
    env.reset();
    result.visited.insert(env.unit_of());
    for (std::size_t k = 0; k < max_episode_steps && result.env_steps < budget; ++k) {
      const bool dead = env.step(policy(rng)).terminated;
      ++result.env_steps;
      if (!dead) result.visited.insert(env.unit_of());
      if (result.env_steps % report_every == 0 || result.env_steps == budget) emit();
      if (dead) break;
    }
  }
  return result;
}

// Binary PGM, `block` x `block` pixels per tile: walls 0, visited tiles 255,
// unvisited traps and doors 128, other unvisited tiles 64.
inline std::string coverage_map_pgm(const Level& level, const std::set<UnitId>& visited, int block = 8) {
  const int w = level.cols() * block, h = level.rows() * block;
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + static_cast<std::size_t>(w) * h);
  for (int r = 0; r < level.rows(); ++r)
    for (int c = 0; c < level.cols(); ++c) {
      const char t = level.tile({r, c});
      unsigned char v = 0;
      if (t != tile::kWall) {
        if (visited.count(level.unit_at({r, c}))) v = 255;
        else if (t == tile::kTrap || tile::is_door(t)) v = 128;
        else v = 64;
      }
      for (int y = 0; y < block; ++y)
        for (int x = 0; x < block; ++x)
          out[header + static_cast<std::size_t>(r * block + y) * w + (c * block + x)] = static_cast<char>(v);
    }
  return out;
}

inline void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

struct RunRecord {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::uint64_t budget = 0;
  Algorithm algo = Algorithm::RbExplore;
  std::vector<IterationReport> rows;
  std::set<UnitId> visited;
  std::size_t full_units = 0;
  double final_coverage = 0.0;
  std::size_t final_clusters = 0;
  fs::path dir;
};

// Runs one experiment and writes metrics.csv (flushed per row), run.json,
// coverage.pgm and, for the rollback algorithms, graph.json + graph.bin.
inline RunRecord run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir) {
  if (cfg.budget <= 0) throw ConfigError("budget must be positive");
  if (cfg.level.empty()) throw ConfigError("config does not name a level");
  cfg.rb.validate();
  const std::string level_text = read_text_file(cfg.level);
  const PersiaLite env = PersiaLite::load(level_text);
  const std::set<UnitId> full = reachable_units(env.level());

  fs::create_directories(out_dir);
  RunRecord rec;
  rec.config_hash = hex64(fnv1a(canonical_config(cfg)));
  rec.seed = cfg.rb.seed;
  rec.budget = static_cast<std::uint64_t>(cfg.budget);
  rec.algo = cfg.algo;
  rec.full_units = full.size();
  rec.dir = out_dir;

  std::ofstream csv(out_dir / "metrics.csv", std::ios::binary);
  if (!csv) throw std::runtime_error("cannot write " + (out_dir / "metrics.csv").string());
  csv << kMetricsHeader << '\n' << std::flush;
  auto on_report = [&](const IterationReport& r) {
    rec.rows.push_back(r);
    csv << format_metrics_row(r) << '\n' << std::flush;
  };

  if (cfg.algo == Algorithm::Random) {
    Rng rng = derive_rng(cfg.rb.seed, {0x72616e64ULL});
    const int episode = cfg.random_episode_steps > 0 ? cfg.random_episode_steps : cfg.rb.max_rollout_steps;
    const std::int64_t every = cfg.random_report_every > 0
                                   ? cfg.random_report_every
                                   : std::int64_t{cfg.rb.clusters_per_iteration} * cfg.rb.max_rollout_steps;
    const auto res = random_baseline(env, full, rec.budget, static_cast<std::size_t>(episode), rng,
                                     static_cast<std::uint64_t>(every), on_report);
    rec.visited = res.visited;
  } else {
    const auto mode = cfg.algo == Algorithm::RbExplore ? SimilarityMode::Learned : SimilarityMode::Oracle;
    Explorer<PersiaLite> explorer(env, cfg.rb, full, mode);
    explorer.run(rec.budget, on_report);
    rec.visited = explorer.visited_units();
    rec.final_clusters = explorer.graph().size();
    save_graph(explorer.graph(), out_dir / "graph.json", out_dir / "graph.bin");
  }
  rec.final_coverage = coverage(rec.visited, full);

  const nlohmann::json doc = {{"config_hash", rec.config_hash},
                              {"config", canonical_config(cfg)},
                              {"algo", algorithm_name(cfg.algo)},
                              {"seed", rec.seed},
                              {"budget", rec.budget},
                              {"level_name", env.level().spec().name},
                              {"level_fingerprint", hex64(env.level().fingerprint())},
                              {"level_text", level_text},
                              {"iterations", rec.rows.size()},
                              {"full_units", rec.full_units},
                              {"final_coverage_pct", rec.final_coverage},
                              {"final_clusters", rec.final_clusters},
                              {"visited_units", rec.visited}};
  write_file(out_dir / "run.json", doc.dump(1) + "\n");
  write_file(out_dir / "coverage.pgm", coverage_map_pgm(env.level(), rec.visited));
  return rec;
}

inline nlohmann::json read_run_json(const fs::path& run_dir) {
  const fs::path p = run_dir / "run.json";
  try {
    return nlohmann::json::parse(read_text_file(p));
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(p.string() + ": " + e.what());
  }
}

// Re-renders DIR/coverage.pgm from the run record.
inline fs::path render_coverage_map(const fs::path& run_dir) {
  const auto doc = read_run_json(run_dir);
  const PersiaLite env = PersiaLite::load(doc.at("level_text").get<std::string>());
  const auto visited = doc.at("visited_units").get<std::set<UnitId>>();
  const fs::path out = run_dir / "coverage.pgm";
  write_file(out, coverage_map_pgm(env.level(), visited));
  return out;
}

struct CoverageCurve {
  std::uint64_t budget = 0;
  std::vector<std::pair<std::uint64_t, double>> points;  // (env_steps, coverage_pct)
};

inline CoverageCurve read_coverage_curve(const fs::path& run_dir) {
  const auto doc = read_run_json(run_dir);
  CoverageCurve curve;
  curve.budget = doc.at("budget").get<std::uint64_t>();
  std::istringstream in(read_text_file(run_dir / "metrics.csv"));
  std::string line;
  std::getline(in, line);
  if (detail::trim(line) != kMetricsHeader) throw DecodeError(run_dir.string() + ": unexpected metrics header");
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 8) throw DecodeError(run_dir.string() + ": malformed metrics row");
    curve.points.emplace_back(detail::parse_integer<std::uint64_t>("env_steps", detail::trim(cells[1])),
                              detail::parse_real("coverage_pct", detail::trim(cells[7])));
  }
  return curve;
}

struct SummaryRow {
  std::uint64_t env_steps = 0;
  double mean = 0, min = 0, max = 0;
};

// Coverage at `checkpoints` evenly spaced budgets; each curve contributes the
// coverage of its last row at or before the checkpoint (0 before its first row).
inline std::vector<SummaryRow> summarize(const std::vector<CoverageCurve>& curves, int checkpoints = 20) {
  if (curves.empty()) throw ConfigError("summarize needs at least one run");
  if (checkpoints < 1) throw ConfigError("summarize needs at least one checkpoint");
  const std::uint64_t budget = curves.front().budget;
  for (const auto& c : curves)
    if (c.budget != budget)
      throw ConfigError("runs have misaligned budgets (" + std::to_string(budget) + " vs " +
                        std::to_string(c.budget) + ")");
  std::vector<SummaryRow> rows;
  for (int k = 1; k <= checkpoints; ++k) {
    SummaryRow row;
    row.env_steps = budget * static_cast<std::uint64_t>(k) / static_cast<std::uint64_t>(checkpoints);
    std::vector<double> vals;
    for (const auto& c : curves) {
      double v = 0.0;
      for (const auto& [steps, cov] : c.points)
        if (steps <= row.env_steps) v = cov;
      vals.push_back(v);
    }
    row.min = *std::min_element(vals.begin(), vals.end());
    row.max = *std::max_element(vals.begin(), vals.end());
    double sum = 0;
    for (double v : vals) sum += v;
    row.mean = sum / static_cast<double>(vals.size());
    rows.push_back(row);
  }
  return rows;
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows, std::size_t runs) {
  std::string out = "checkpoint,env_steps,runs,mean_coverage_pct,min_coverage_pct,max_coverage_pct\n";
  char buf[160];
  for (std::size_t k = 0; k < rows.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%zu,%llu,%zu,%.4f,%.4f,%.4f\n", k + 1,
                  static_cast<unsigned long long>(rows[k].env_steps), runs, rows[k].mean, rows[k].min, rows[k].max);
    out += buf;
  }
  return out;
}

// Reads run directories, checks that they share level and budget, and returns summary.csv text.
inline std::string summarize_runs(const std::vector<fs::path>& run_dirs, int checkpoints = 20) {
  std::vector<CoverageCurve> curves;
  std::string fingerprint;
  for (const auto& d : run_dirs) {
    const auto doc = read_run_json(d);
    const auto fp = doc.at("level_fingerprint").get<std::string>();
    if (fingerprint.empty()) fingerprint = fp;
    if (fp != fingerprint) throw ConfigError("runs were made on different levels");
    curves.push_back(read_coverage_curve(d));
  }
  return summary_csv(summarize(curves, checkpoints), curves.size());
}

}  // namespace rbx
