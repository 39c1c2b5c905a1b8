#pragma once

// The rollback exploration loop. One iteration:
//   1. sample M clusters (inverse-visit weights), restore each snapshot and
//      roll out a uniform random policy;
//   2. push RND-novel states into the novelty buffer, roll out from up to L
//      buffered states, and build similarity pairs from all these trajectories
//      plus prefix negatives;
//   3. train the similarity model;
//   4. insert the exploration trajectories into the graph, merging every
//      merge_every iterations;
//   5. train RND on the exploration observations.
// Budgets are environment steps; every rollout (exploration, novelty side
// rollouts and pretraining) is charged.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "rbx/cluster_graph.hpp"
#include "rbx/errors.hpp"
#include "rbx/model_scorer.hpp"
#include "rbx/pmdp.hpp"
#include "rbx/rnd.hpp"
#include "rbx/rng.hpp"
#include "rbx/similarity.hpp"
#include "rbx/trajectory.hpp"

namespace rbx {

// Uniform distribution over the seven actions.
struct UniformPolicy {
  Action operator()(Rng& rng) const { return static_cast<Action>(uniform_index(rng, kActionCount)); }
};

// Restores `start` and follows `policy` for at most `max_steps` steps or until death.
template <UnitAccounting Env, class Policy>
Trajectory rollout(Env& env, const Snapshot& start, Policy&& policy, std::size_t max_steps, Rng& rng) {
  if (max_steps < 1) throw ContractViolation("rollout needs max_steps >= 1");
  Trajectory t;
  if (env.restore_snapshot(start).terminated) throw ContractViolation("rollout from a terminal snapshot");
  t.steps.reserve(max_steps);
  for (std::size_t k = 0; k < max_steps; ++k) {
    StepResult r = env.step(policy(rng));
    ++t.env_steps;
    if (r.terminated) {
      t.died = true;
      break;
    }
    t.steps.push_back({std::move(r.observation), env.save_snapshot(), env.unit_of()});
  }
  return t;
}

struct RbConfig {
  double theta_sim = 0.5;
  double theta_merge = 0.5;
  int merge_every = 15;
  int clusters_per_iteration = 30;  // M
  int novel_rollouts = 100;         // L
  int close_steps = 5;              // n: positives are fewer than n steps apart
  int far_steps = 25;               // N: negatives are more than N steps apart
  double beta_intrinsic = 2.5;
  int max_rollout_steps = 300;
  std::uint64_t pretrain_steps = 50'000;
  int pairs_per_trajectory = 64;
  int prefix_negatives_per_trajectory = 32;
  int side_pairs_per_trajectory = 32;
  TrainOptions train;
  SimilarityConfig similarity;
  RndConfig rnd;
  std::size_t novelty_capacity = 10'000;
  bool no_merge = false;
  bool no_prefix_negatives = false;
  bool pretrain_updates_rnd_predictor = false;
  int threads = 1;
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (!(theta_sim > 0 && theta_sim < 1)) fail("theta_sim must lie in (0, 1)");
    if (!(theta_merge > 0 && theta_merge < 1)) fail("theta_merge must lie in (0, 1)");
    if (close_steps < 1 || close_steps >= far_steps) fail("need 1 <= n < N");
    if (clusters_per_iteration < 1) fail("M must be >= 1");
    if (novel_rollouts < 0) fail("L must be >= 0");
    if (merge_every < 1) fail("merge_every must be >= 1");
    if (max_rollout_steps < 1) fail("max_rollout_steps must be >= 1");
    if (train.epochs < 0 || train.batch_size < 1 || !(train.learning_rate > 0)) fail("invalid similarity optimizer");
    if (rnd.batch_size < 1 || !(rnd.learning_rate > 0)) fail("invalid RND optimizer");
    if (threads < 1) fail("threads must be >= 1");
    if (novelty_capacity < 1) fail("novelty_capacity must be >= 1");
  }

  // Values used for the published game experiments.
  static RbConfig paper_scale() {
    RbConfig c;
    c.novel_rollouts = 1000;
    c.max_rollout_steps = 1500;
    c.pretrain_steps = 500'000;
    return c;
  }
};

struct IterationReport {
  std::uint64_t iteration = 0;
  std::uint64_t env_steps = 0;  // cumulative
  std::size_t clusters = 0;
  std::size_t merges = 0;
  std::size_t novel_flagged = 0;
  double sim_loss = 0.0;
  double rnd_loss = 0.0;
  double coverage_pct = 0.0;
  bool pretraining = false;
  double theta = 0.0;
  std::size_t new_clusters = 0;
  std::size_t side_rollouts = 0;
  std::size_t pairs = 0;
};

enum class SimilarityMode { Learned, Oracle };

// Trajectories of the most recent iteration, kept for inspection.
struct IterationTrace {
  std::vector<ClusterId> starts;
  std::vector<Trajectory> exploration;
  std::vector<Trajectory> side;
};

template <UnitAccounting Env>
class Explorer {
 public:
  // `full_units` is the coverage denominator. In Oracle mode clusters are
  // matched by ground-truth unit and the learned components stay idle.
  Explorer(Env env, RbConfig config, std::set<UnitId> full_units, SimilarityMode mode = SimilarityMode::Learned)
      : config_(std::move(config)),
        mode_(mode),
        full_units_(std::move(full_units)),
        model_(make_model(config_)),
        rnd_(make_rnd(config_)),
        buffer_(config_.novelty_capacity),
        graph_(initial_graph(env)) {
    config_.validate();
    envs_.assign(static_cast<std::size_t>(config_.threads), env);
    model_scorer_ = std::make_unique<ModelScorer>(model_);
    if (mode_ == SimilarityMode::Oracle) {
      const Env probe = env;
      auto unit_of = [probe](const Snapshot& s) { return probe.unit_of_snapshot(s); };
      scorer_ = std::make_unique<UnitOracleScorer<decltype(unit_of)>>(unit_of);
    }
    visited_.insert(env.unit_of_snapshot(graph_.cluster(graph_.root()).snapshot));
  }

  // Replaces the similarity used for graph updates (models still train in Learned mode).
  void set_scorer(std::unique_ptr<StateScorer> scorer) { scorer_ = std::move(scorer); }

  const RbConfig& config() const { return config_; }
  SimilarityMode mode() const { return mode_; }
  const ClusterGraph& graph() const { return graph_; }
  const SimilarityModel& similarity() const { return model_; }
  const RndModule& rnd() const { return rnd_; }
  const NoveltyBuffer& novelty_buffer() const { return buffer_; }
  const IterationTrace& last_trace() const { return trace_; }
  std::uint64_t env_steps() const { return env_steps_; }
  std::uint64_t iterations() const { return iteration_; }
  const std::set<UnitId>& visited_units() const { return visited_; }
  double coverage_pct() const { return coverage(visited_, full_units_); }

  std::uint64_t env_lifetime_steps() const {
    std::uint64_t total = 0;
    for (const auto& e : envs_) total += e.lifetime_steps();
    return total;
  }

  // Linear threshold ramp used while pretraining.
  double pretrain_theta(std::uint64_t consumed) const {
    if (config_.pretrain_steps == 0) return config_.theta_sim;
    const double f = static_cast<double>(consumed) / static_cast<double>(config_.pretrain_steps);
    return config_.theta_sim * std::clamp(f, 0.0, 1.0);
  }

  // Runs iterations with the ramped threshold until pretrain_steps (or the
  // budget) are spent, then resets the graph to the initial state. Model
  // parameters and normalizers are kept. No-op in Oracle mode.
  std::vector<IterationReport> pretrain(std::uint64_t budget,
                                        const std::function<void(const IterationReport&)>& on_report = {}) {
    std::vector<IterationReport> reports;
    if (mode_ == SimilarityMode::Oracle || config_.pretrain_steps == 0) return reports;
    const std::uint64_t cap = std::min(budget, env_steps_ + config_.pretrain_steps);
    const std::uint64_t begin = env_steps_;
    while (env_steps_ < cap) {
      reports.push_back(run_iteration(pretrain_theta(env_steps_ - begin), true, cap));
      if (on_report) on_report(reports.back());
    }
    graph_ = initial_graph(envs_.front());
    model_scorer_->invalidate();
    phase_iteration_ = 0;
    return reports;
  }

  // Pretraining followed by fixed-threshold iterations until `budget` env steps are used.
  std::vector<IterationReport> run(std::uint64_t budget,
                                   const std::function<void(const IterationReport&)>& on_report = {}) {
    if (budget < 1) throw ContractViolation("budget must be positive");
    std::vector<IterationReport> reports = pretrain(budget, on_report);
    while (env_steps_ < budget) {
      reports.push_back(run_iteration(config_.theta_sim, false, budget));
      if (on_report) on_report(reports.back());
    }
    return reports;
  }

  // One full iteration; rollouts stop once `budget_cap` total env steps are
  // reached. The graph is replaced only if every step succeeds.
  IterationReport run_iteration(double theta, bool pretraining, std::uint64_t budget_cap) {
    const bool learned = mode_ == SimilarityMode::Learned;
    const std::uint64_t iteration = iteration_ + 1;
    const std::uint64_t phase_iteration = phase_iteration_ + 1;
    IterationReport report;
    report.iteration = iteration;
    report.pretraining = pretraining;
    report.theta = theta;

    // (1) exploration rollouts from sampled clusters
    Rng sample_rng = derive_rng(config_.seed, {kTagSample, iteration});
    IterationTrace trace;
    trace.starts = sample_clusters(graph_, static_cast<std::size_t>(config_.clusters_per_iteration), sample_rng);
    std::vector<Snapshot> starts;
    for (ClusterId id : trace.starts) starts.push_back(graph_.cluster(id).snapshot);
    std::uint64_t steps = env_steps_;
    trace.exploration = run_rollouts(starts, kTagExplore, iteration, budget_cap, steps);
    trace.starts.resize(trace.exploration.size());

    std::vector<Observation> explored;
    for (const auto& t : trace.exploration)
      for (const auto& s : t.steps) explored.push_back(s.observation);

    PairDataset dataset;
    if (learned) {
      // (2) novelty filtering, side rollouts and training pairs
      for (const auto& t : trace.exploration) {
        const auto obs = t.observations();
        const auto flags = rnd_.novel_flags(obs, config_.beta_intrinsic);
        for (std::size_t i = 0; i < flags.size(); ++i) {
          if (!flags[i]) continue;
          buffer_.push({t.steps[i].observation, t.steps[i].snapshot});
          ++report.novel_flagged;
        }
      }
      if (config_.novel_rollouts > 0 && !buffer_.empty()) {
        Rng draw_rng = derive_rng(config_.seed, {kTagBuffer, iteration});
        std::vector<Snapshot> side_starts;
        for (auto& s : buffer_.sample(static_cast<std::size_t>(config_.novel_rollouts), draw_rng))
          side_starts.push_back(std::move(s.snapshot));
        trace.side = run_rollouts(side_starts, kTagSide, iteration, budget_cap, steps);
      }
      report.side_rollouts = trace.side.size();

      Rng pair_rng = derive_rng(config_.seed, {kTagPairs, iteration});
      for (std::size_t k = 0; k < trace.exploration.size(); ++k) {
        const auto obs = trace.exploration[k].observations();
        dataset.append(generate_pairs(obs, config_.close_steps, config_.far_steps,
                                      static_cast<std::size_t>(config_.pairs_per_trajectory), pair_rng));
        if (!config_.no_prefix_negatives) {
          const auto prefix = graph_.full_prefix(trace.starts[k]);
          if (!prefix.empty())
            dataset.append(generate_prefix_negatives(obs, prefix, config_.far_steps,
                                                     static_cast<std::size_t>(config_.prefix_negatives_per_trajectory),
                                                     pair_rng));
        }
      }
      for (const auto& t : trace.side)
        dataset.append(generate_pairs(t.observations(), config_.close_steps, config_.far_steps,
                                      static_cast<std::size_t>(config_.side_pairs_per_trajectory), pair_rng));
      report.pairs = dataset.size();

      // (3) similarity training
      if (dataset.has_both_classes()) {
        Rng train_rng = derive_rng(config_.seed, {kTagTrain, iteration});
        report.sim_loss = train(model_, dataset, config_.train, train_rng).back();
      }
    }

    // (4) graph update on a copy
    StateScorer& scorer = active_scorer();
    ClusterGraph next = graph_;
    for (std::size_t k = 0; k < trace.exploration.size(); ++k)
      report.new_clusters +=
          insert_trajectory(next, scorer, trace.exploration[k], trace.starts[k], theta, iteration).new_clusters;
    if (!config_.no_merge && phase_iteration % static_cast<std::uint64_t>(config_.merge_every) == 0)
      report.merges = merge_pass(next, scorer, config_.theta_merge);

    // (5) novelty detector update
    if (learned && !explored.empty())
      report.rnd_loss = rnd_.update(explored, !pretraining || config_.pretrain_updates_rnd_predictor);

    graph_ = std::move(next);
    iteration_ = iteration;
    phase_iteration_ = phase_iteration;
    env_steps_ = steps;
    for (const auto* group : {&trace.exploration, &trace.side})
      for (const auto& t : *group)
        for (const auto& s : t.steps) visited_.insert(s.unit);
    trace_ = std::move(trace);

    report.env_steps = env_steps_;
    report.clusters = graph_.size();
    report.coverage_pct = coverage_pct();
    return report;
  }

 private:
  static constexpr std::uint64_t kTagModel = 1, kTagRndTarget = 2, kTagRndPredictor = 3, kTagSample = 4,
                                 kTagExplore = 5, kTagSide = 6, kTagPairs = 7, kTagTrain = 8, kTagBuffer = 9;

  static SimilarityModel make_model(const RbConfig& c) {
    Rng rng = derive_rng(c.seed, {kTagModel});
    return SimilarityModel(c.similarity, rng);
  }

  static RndModule make_rnd(const RbConfig& c) {
    Rng target = derive_rng(c.seed, {kTagRndTarget});
    Rng predictor = derive_rng(c.seed, {kTagRndPredictor});
    return RndModule(c.rnd, target, predictor);
  }

  static ClusterGraph initial_graph(Env env) {
    StepResult r = env.reset();
    return ClusterGraph(std::move(r.observation), env.save_snapshot());
  }

  StateScorer& active_scorer() { return scorer_ ? *scorer_ : *model_scorer_; }

  // Rollouts in start order. `steps` is the running env-step total; rollouts
  // are truncated to stay within `cap` and skipped once it is reached. When the
  // whole batch fits at full length it may run on several threads with
  // identical results.
  std::vector<Trajectory> run_rollouts(const std::vector<Snapshot>& starts, std::uint64_t tag,
                                       std::uint64_t iteration, std::uint64_t cap, std::uint64_t& steps) {
    const auto max_len = static_cast<std::uint64_t>(config_.max_rollout_steps);
    std::vector<Trajectory> out;
    if (envs_.size() > 1 && steps + max_len * starts.size() <= cap) {
      out.resize(starts.size());
      std::vector<std::thread> workers;
      for (std::size_t w = 0; w < envs_.size(); ++w)
        workers.emplace_back([&, w] {
          for (std::size_t k = w; k < starts.size(); k += envs_.size()) {
            Rng rng = derive_rng(config_.seed, {tag, iteration, k});
            out[k] = rollout(envs_[w], starts[k], UniformPolicy{}, max_len, rng);
          }
        });
      for (auto& t : workers) t.join();
      for (const auto& t : out) steps += t.env_steps;
      return out;
    }
    for (std::size_t k = 0; k < starts.size() && steps < cap; ++k) {
      Rng rng = derive_rng(config_.seed, {tag, iteration, k});
      out.push_back(rollout(envs_.front(), starts[k], UniformPolicy{}, std::min(max_len, cap - steps), rng));
      steps += out.back().env_steps;
    }
    return out;
  }

  RbConfig config_;
  SimilarityMode mode_;
  std::set<UnitId> full_units_;
  SimilarityModel model_;
  RndModule rnd_;
  NoveltyBuffer buffer_;
  ClusterGraph graph_;
  std::vector<Env> envs_;
  std::unique_ptr<ModelScorer> model_scorer_;
  std::unique_ptr<StateScorer> scorer_;
  IterationTrace trace_;
  std::set<UnitId> visited_;
  std::uint64_t env_steps_ = 0;
  std::uint64_t iteration_ = 0;
  std::uint64_t phase_iteration_ = 0;
};

}  // namespace rbx
