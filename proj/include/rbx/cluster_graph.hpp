#pragma once

// Graph of clusters over visited states. Each cluster keeps a center
// observation and the snapshot that reproduces it. Regular arcs record
// transitions seen between clusters; every non-root cluster also has one
// parent arc carrying the observations that led to it, so concatenating
// parent prefixes yields a path back to the initial state.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "rbx/errors.hpp"
#include "rbx/observation.hpp"
#include "rbx/pmdp.hpp"
#include "rbx/rng.hpp"
#include "rbx/trajectory.hpp"

namespace rbx {

using ClusterId = std::uint32_t;

struct Cluster {
  ClusterId id = 0;
  Observation center;
  Snapshot snapshot;
  std::uint64_t visit_count = 0;
  std::uint64_t created_at = 0;  // iteration index
};

struct ParentArc {
  ClusterId parent = 0;
  std::vector<Observation> prefix;
};

// Similarity between cluster centers and candidate states. Implementations may
// cache per-cluster work; they are told about every query batch via prefetch().
class StateScorer {
 public:
  virtual ~StateScorer() = default;
  // R(center of c, state).
  virtual double score(const Cluster& c, const Observation& obs, const Snapshot& snapshot) = 0;
  // R(center of a, center of b).
  virtual double score_centers(const Cluster& a, const Cluster& b) = 0;
  virtual void prefetch(std::span<const Observation>) {}
};

class ClusterGraph {
 public:
  using ArcKey = std::pair<ClusterId, ClusterId>;

  ClusterGraph(Observation initial_observation, Snapshot initial_snapshot) {
    clusters_.emplace(0, Cluster{0, std::move(initial_observation), std::move(initial_snapshot), 0, 0});
    neighbors_[0];
    next_id_ = 1;
  }

  ClusterId root() const { return 0; }
  std::size_t size() const { return clusters_.size(); }
  bool contains(ClusterId id) const { return clusters_.count(id) != 0; }
  ClusterId next_id() const { return next_id_; }

  const Cluster& cluster(ClusterId id) const {
    auto it = clusters_.find(id);
    if (it == clusters_.end()) throw ContractViolation("no cluster " + std::to_string(id));
    return it->second;
  }
  Cluster& cluster(ClusterId id) { return const_cast<Cluster&>(std::as_const(*this).cluster(id)); }

  const std::map<ClusterId, Cluster>& clusters() const { return clusters_; }
  const std::map<ArcKey, std::uint64_t>& arcs() const { return arcs_; }
  const std::map<ClusterId, ParentArc>& parents() const { return parents_; }
  // Clusters joined to `id` by an arc in either direction.
  const std::set<ClusterId>& neighbors(ClusterId id) const { return neighbors_.at(id); }

  ClusterId add_cluster(Observation center, Snapshot snapshot, ClusterId parent, std::vector<Observation> prefix,
                        std::uint64_t iteration) {
    if (!contains(parent)) throw ContractViolation("parent cluster does not exist");
    const ClusterId id = next_id_++;
    clusters_.emplace(id, Cluster{id, std::move(center), std::move(snapshot), 0, iteration});
    parents_.emplace(id, ParentArc{parent, std::move(prefix)});
    neighbors_[id];
    return id;
  }

  void add_arc(ClusterId from, ClusterId to, std::uint64_t count = 1) {
    if (from == to) throw ContractViolation("self-arcs are not allowed");
    if (!contains(from) || !contains(to)) throw ContractViolation("arc endpoint does not exist");
    arcs_[{from, to}] += count;
    neighbors_[from].insert(to);
    neighbors_[to].insert(from);
  }

  // Folds `victim` into `survivor`: visits summed, arcs re-pointed (self-arcs
  // dropped, parallel counts summed), victim's parent arc dropped and its
  // children re-parented to the survivor with unchanged prefixes.
  void absorb(ClusterId survivor, ClusterId victim) {
    if (survivor == victim || victim == root()) throw ContractViolation("invalid merge pair");
    Cluster& s = cluster(survivor);
    s.visit_count += cluster(victim).visit_count;

    std::vector<std::pair<ArcKey, std::uint64_t>> moved;
    for (ClusterId n : neighbors_.at(victim)) {
      for (const ArcKey& key : {ArcKey{victim, n}, ArcKey{n, victim}}) {
        auto it = arcs_.find(key);
        if (it == arcs_.end()) continue;
        moved.emplace_back(key, it->second);
        arcs_.erase(it);
      }
      neighbors_.at(n).erase(victim);
    }
    neighbors_.erase(victim);
    for (const auto& [key, count] : moved) {
      const ClusterId from = key.first == victim ? survivor : key.first;
      const ClusterId to = key.second == victim ? survivor : key.second;
      if (from != to) add_arc(from, to, count);
    }
    // Rebuild the survivor's neighbor set in case a dropped self-arc was its only link.
    rebuild_neighbors(survivor);

    parents_.erase(victim);
    for (auto& [child, arc] : parents_)
      if (arc.parent == victim) arc.parent = survivor;
    clusters_.erase(victim);
  }

  std::optional<ClusterId> parent_of(ClusterId id) const {
    auto it = parents_.find(id);
    if (it == parents_.end()) return std::nullopt;
    return it->second.parent;
  }

  // Concatenated parent-arc prefixes from the root down to `id`; empty for the root.
  std::vector<Observation> full_prefix(ClusterId id) const {
    std::vector<const ParentArc*> chain;
    ClusterId cur = id;
    (void)cluster(id);
    while (cur != root()) {
      const ParentArc& arc = parents_.at(cur);
      chain.push_back(&arc);
      cur = arc.parent;
      if (chain.size() > clusters_.size()) throw ContractViolation("parent arcs contain a cycle");
    }
    std::vector<Observation> out;
    for (auto it = chain.rbegin(); it != chain.rend(); ++it)
      out.insert(out.end(), (*it)->prefix.begin(), (*it)->prefix.end());
    return out;
  }

  std::uint64_t total_visits() const {
    std::uint64_t total = 0;
    for (const auto& [id, c] : clusters_) total += c.visit_count;
    return total;
  }

  // Rebuilds a graph from stored parts; the result is checked with check_invariants().
  static ClusterGraph from_parts(std::vector<Cluster> clusters, std::map<ClusterId, ParentArc> parents,
                                 std::map<ArcKey, std::uint64_t> arcs, ClusterId next_id) {
    ClusterGraph g;
    for (auto& c : clusters) {
      if (c.id >= next_id) throw ContractViolation("cluster id not below next_id");
      g.neighbors_[c.id];
      const ClusterId id = c.id;
      if (!g.clusters_.emplace(id, std::move(c)).second) throw ContractViolation("duplicate cluster id");
    }
    g.parents_ = std::move(parents);
    for (const auto& [key, count] : arcs) g.add_arc(key.first, key.second, count);
    g.next_id_ = next_id;
    g.check_invariants();
    return g;
  }

  // Throws ContractViolation describing the first broken structural invariant.
  void check_invariants() const {
    if (!contains(root())) throw ContractViolation("root cluster missing");
    if (parents_.count(root())) throw ContractViolation("root has a parent arc");
    for (const auto& [key, count] : arcs_) {
      if (key.first == key.second) throw ContractViolation("self-arc present");
      if (!contains(key.first) || !contains(key.second)) throw ContractViolation("arc to a removed cluster");
      if (count == 0) throw ContractViolation("arc with zero count");
    }
    for (const auto& [id, c] : clusters_) {
      if (c.id != id) throw ContractViolation("cluster id mismatch");
      if (id == root()) continue;
      auto it = parents_.find(id);
      if (it == parents_.end()) throw ContractViolation("cluster " + std::to_string(id) + " has no parent arc");
      if (!contains(it->second.parent)) throw ContractViolation("parent arc to a removed cluster");
      std::size_t hops = 0;
      for (ClusterId cur = id; cur != root(); cur = parents_.at(cur).parent)
        if (++hops > clusters_.size()) throw ContractViolation("parent arcs contain a cycle");
    }
    if (parents_.size() + 1 != clusters_.size()) throw ContractViolation("parent arc count mismatch");
    for (const auto& [id, ns] : neighbors_) {
      if (!contains(id)) throw ContractViolation("neighbor list for a removed cluster");
      for (ClusterId n : ns)
        if (!arcs_.count({id, n}) && !arcs_.count({n, id})) throw ContractViolation("stale neighbor entry");
    }
  }

 private:
  ClusterGraph() = default;

  void rebuild_neighbors(ClusterId id) {
    auto& ns = neighbors_.at(id);
    for (auto it = ns.begin(); it != ns.end();) {
      if (!arcs_.count({id, *it}) && !arcs_.count({*it, id})) {
        neighbors_.at(*it).erase(id);
        it = ns.erase(it);
      } else {
        ++it;
      }
    }
  }

  std::map<ClusterId, Cluster> clusters_;
  std::map<ArcKey, std::uint64_t> arcs_;
  std::map<ClusterId, ParentArc> parents_;
  std::map<ClusterId, std::set<ClusterId>> neighbors_;
  ClusterId next_id_ = 0;
};

struct Assignment {
  ClusterId cluster = 0;
  bool is_new = true;
};

namespace detail {

template <class Range>
std::optional<ClusterId> best_above(const ClusterGraph& graph, StateScorer& scorer, const Range& candidates,
                                    const Observation& obs, const Snapshot& snap, double theta) {
  std::optional<ClusterId> best;
  double best_score = theta;
  for (ClusterId id : candidates) {
    const double s = scorer.score(graph.cluster(id), obs, snap);
    // Ascending ids with a strict comparison keep the smallest id on ties.
    if (s > best_score) best_score = s, best = id;
  }
  return best;
}

}  // namespace detail

// Neighbor-first search for the cluster a state belongs to: the previous
// cluster and its neighbors first, then every cluster. Within a phase the best
// score above theta wins. No match means the caller should open a new cluster.
inline Assignment assign(const ClusterGraph& graph, StateScorer& scorer, const Observation& obs,
                         const Snapshot& snap, std::optional<ClusterId> previous, double theta) {
  if (theta < 0.0 || theta >= 1.0) throw ContractViolation("similarity threshold must lie in [0, 1)");
  if (previous && graph.contains(*previous)) {
    std::set<ClusterId> local = graph.neighbors(*previous);
    local.insert(*previous);
    if (auto hit = detail::best_above(graph, scorer, local, obs, snap, theta)) return {*hit, false};
  }
  std::vector<ClusterId> all;
  all.reserve(graph.size());
  for (const auto& [id, c] : graph.clusters()) all.push_back(id);
  if (auto hit = detail::best_above(graph, scorer, all, obs, snap, theta)) return {*hit, false};
  return {0, true};
}

struct InsertResult {
  std::vector<ClusterId> assignment;  // cluster of each trajectory state
  std::size_t new_clusters = 0;
};

// Adds one exploration trajectory that was rolled out from `start`.
// A new cluster's parent is the cluster of the preceding state; its prefix runs
// from the state where the trajectory entered that parent cluster through the
// new center (from the first state when the parent is `start` and the
// trajectory has not left it). Visit counts: +1 for `start` being selected and
// +1 for every cluster the trajectory touches.
inline InsertResult insert_trajectory(ClusterGraph& graph, StateScorer& scorer, const Trajectory& trajectory,
                                      ClusterId start, double theta, std::uint64_t iteration) {
  InsertResult result;
  if (trajectory.empty()) return result;
  if (!graph.contains(start)) throw ContractViolation("start cluster does not exist");
  const std::vector<Observation> obs = trajectory.observations();
  scorer.prefetch(obs);

  graph.cluster(start).visit_count += 1;
  ClusterId prev = start;
  std::size_t run_start = 0;
  std::set<ClusterId> touched;
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    const auto& step = trajectory.steps[i];
    const Assignment a = assign(graph, scorer, step.observation, step.snapshot, prev, theta);
    ClusterId c = a.cluster;
    if (a.is_new) {
      std::vector<Observation> prefix(obs.begin() + static_cast<std::ptrdiff_t>(run_start),
                                      obs.begin() + static_cast<std::ptrdiff_t>(i) + 1);
      c = graph.add_cluster(step.observation, step.snapshot, prev, std::move(prefix), iteration);
      ++result.new_clusters;
    }
    touched.insert(c);
    if (c != prev) {
      graph.add_arc(prev, c);
      prev = c;
      run_start = i;
    }
    result.assignment.push_back(c);
  }
  for (ClusterId c : touched) graph.cluster(c).visit_count += 1;
  return result;
}

// M independent draws with probability proportional to 1 / (1 + visit_count).
inline std::vector<ClusterId> sample_clusters(const ClusterGraph& graph, std::size_t count, Rng& rng) {
  std::vector<ClusterId> ids;
  std::vector<double> cumulative;
  double total = 0.0;
  for (const auto& [id, c] : graph.clusters()) {
    total += 1.0 / (1.0 + static_cast<double>(c.visit_count));
    ids.push_back(id);
    cumulative.push_back(total);
  }
  std::vector<ClusterId> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double u = uniform_real(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    out.push_back(ids[static_cast<std::size_t>(it - cumulative.begin())]);
  }
  return out;
}

// One pass over unordered cluster pairs in (created_at, id) order. A pair whose
// centers score above theta in either order is merged into the older cluster;
// both clusters of a merged pair take no further part in the pass.
inline std::size_t merge_pass(ClusterGraph& graph, StateScorer& scorer, double theta) {
  if (theta <= 0.0 || theta >= 1.0) throw ContractViolation("merge threshold must lie in (0, 1)");
  std::vector<std::pair<std::uint64_t, ClusterId>> order;
  for (const auto& [id, c] : graph.clusters()) order.emplace_back(c.created_at, id);
  std::sort(order.begin(), order.end());

  std::vector<bool> gone(order.size(), false);
  std::size_t merges = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (gone[i]) continue;
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      if (gone[j]) continue;
      const Cluster& older = graph.cluster(order[i].second);
      const Cluster& younger = graph.cluster(order[j].second);
      const double s = std::max(scorer.score_centers(older, younger), scorer.score_centers(younger, older));
      if (s > theta) {
        graph.absorb(older.id, younger.id);
        gone[i] = gone[j] = true;
        ++merges;
        break;
      }
    }
  }
  return merges;
}

// Exact-match similarity on ground-truth units, decoded from snapshots. Test
// and upper-bound baseline only: it reads privileged state.
template <class UnitOfSnapshot>
class UnitOracleScorer final : public StateScorer {
 public:
  explicit UnitOracleScorer(UnitOfSnapshot unit_of) : unit_of_(std::move(unit_of)) {}

  double score(const Cluster& c, const Observation&, const Snapshot& snapshot) override {
    return unit_of_(c.snapshot) == unit_of_(snapshot) ? 1.0 : 0.0;
  }
  double score_centers(const Cluster& a, const Cluster& b) override {
    return unit_of_(a.snapshot) == unit_of_(b.snapshot) ? 1.0 : 0.0;
  }

 private:
  UnitOfSnapshot unit_of_;
};

}  // namespace rbx
