#pragma once

#include <Eigen/Dense>

#include <span>
#include <unordered_map>

#include "rbx/cluster_graph.hpp"
#include "rbx/similarity.hpp"

namespace rbx {

// StateScorer backed by a SimilarityModel. Head terms of cluster centers and of
// prefetched query observations are cached until the model's parameters change.
class ModelScorer final : public StateScorer {
 public:
  explicit ModelScorer(const SimilarityModel& model) : model_(model) {}

  double score(const Cluster& c, const Observation& obs, const Snapshot&) override {
    sync();
    return model_.head_finish(center(c).first + query(obs));
  }

  double score_centers(const Cluster& a, const Cluster& b) override {
    sync();
    const Eigen::VectorXd first = center(a).first;
    return model_.head_finish(first + center(b).second);
  }

  void prefetch(std::span<const Observation> obs) override {
    sync();
    queries_.clear();
    if (obs.empty()) return;
    const Eigen::MatrixXd terms = model_.head_second_term(model_.embed(obs));
    for (std::size_t i = 0; i < obs.size(); ++i)
      queries_.insert_or_assign(obs[i].storage_id(), Query{obs[i], terms.col(static_cast<Eigen::Index>(i))});
  }

  // Drops every cached term (e.g. after the graph was rebuilt).
  void invalidate() {
    centers_.clear();
    queries_.clear();
  }

 private:
  // Entries hold the observation handle so a cached key can never be reused by another frame.
  struct Center {
    Observation obs;
    Eigen::VectorXd first, second;
  };
  struct Query {
    Observation obs;
    Eigen::VectorXd second;
  };

  void sync() {
    if (model_.version() != version_) {
      invalidate();
      version_ = model_.version();
    }
  }

  const Center& center(const Cluster& c) {
    auto it = centers_.find(c.id);
    if (it == centers_.end() || !it->second.obs.shares_storage(c.center)) {
      const Eigen::MatrixXd e = model_.embed(c.center);
      it = centers_.insert_or_assign(c.id, Center{c.center, model_.head_first_term(e), model_.head_second_term(e)})
               .first;
    }
    return it->second;
  }

  const Eigen::VectorXd& query(const Observation& obs) {
    auto it = queries_.find(obs.storage_id());
    if (it == queries_.end()) {
      if (queries_.size() > 4096) queries_.clear();
      it = queries_.emplace(obs.storage_id(), Query{obs, model_.head_second_term(model_.embed(obs))}).first;
    }
    return it->second.second;
  }

  const SimilarityModel& model_;
  std::uint64_t version_ = ~std::uint64_t{0};
  std::unordered_map<ClusterId, Center> centers_;
  std::unordered_map<const void*, Query> queries_;
};

}  // namespace rbx
