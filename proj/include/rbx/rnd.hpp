#pragma once

// Random network distillation novelty detector. A fixed random target network
// and a trained predictor share one architecture; the squared distance between
// their outputs on a normalized observation is the intrinsic reward.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rbx/errors.hpp"
#include "rbx/mlp.hpp"
#include "rbx/observation.hpp"
#include "rbx/pmdp.hpp"
#include "rbx/rng.hpp"
#include "rbx/running_stats.hpp"

namespace rbx {

// How the raw reward is scaled before comparison with the novelty threshold.
enum class NoveltyScore {
  Ratio,     // raw / running std
  Centered,  // (raw - running mean) / running std
};

struct RndConfig {
  int input_cells = 24 * 24;
  int hidden = 128;
  int output = 32;
  Activation activation = Activation::Relu;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  int batch_size = 64;
  double obs_clip = 5.0;
  int warmup_samples = 1000;
  NoveltyScore score = NoveltyScore::Centered;
};

class RndModule {
 public:
  RndModule(RndConfig config, Rng& target_rng, Rng& predictor_rng)
      : config_(config),
        net_({{config.input_cells, config.hidden, config.activation},
              {config.hidden, config.output, Activation::Identity}}),
        obs_stats_(config.input_cells),
        reward_stats_(1) {
    target_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net_.param_count()));
    predictor_ = target_;
    net_.initialize(target_.data(), target_rng);
    net_.initialize(predictor_.data(), predictor_rng);
    optimizer_.learning_rate = config.learning_rate;
    optimizer_.momentum = config.momentum;
  }

  const RndConfig& config() const { return config_; }
  const Mlp& network() const { return net_; }
  const Eigen::VectorXd& target_parameters() const { return target_; }
  const Eigen::VectorXd& predictor_parameters() const { return predictor_; }
  Eigen::VectorXd& mutable_predictor_parameters() { return predictor_; }
  const RunningMeanVar& observation_stats() const { return obs_stats_; }
  const RunningMeanVar& reward_stats() const { return reward_stats_; }

  // Per-cell standardization clipped to [-clip, clip]; identity before any update.
  Eigen::MatrixXd normalize(const Eigen::MatrixXd& x) const {
    if (obs_stats_.count() == 0) return x;
    const Eigen::ArrayXd inv_std = (obs_stats_.variance().array() + 1e-8).rsqrt();
    Eigen::MatrixXd z = ((x.colwise() - obs_stats_.mean()).array().colwise() * inv_std).matrix();
    return z.cwiseMax(-config_.obs_clip).cwiseMin(config_.obs_clip);
  }

  Eigen::VectorXd intrinsic_rewards(std::span<const Observation> obs) const {
    return rewards_of(normalize(observations_to_matrix(obs, config_.input_cells)));
  }

  double intrinsic_reward(const Observation& obs) const {
    return intrinsic_rewards(std::span<const Observation>(&obs, 1))(0);
  }

  // Raw reward scaled by the running reward statistics (see NoveltyScore).
  double novelty_score(double raw_reward) const {
    const double var = reward_stats_.variance()(0);
    if (var <= 0) return 0.0;
    const double centered = config_.score == NoveltyScore::Centered ? raw_reward - reward_stats_.mean()(0) : raw_reward;
    return centered / std::sqrt(var);
  }

  bool warmed_up() const { return reward_stats_.count() >= config_.warmup_samples; }

  bool is_novel(const Observation& obs, double beta) const {
    return warmed_up() && novelty_score(intrinsic_reward(obs)) > beta;
  }

  std::vector<bool> novel_flags(std::span<const Observation> obs, double beta) const {
    std::vector<bool> flags(obs.size(), false);
    if (!warmed_up() || obs.empty()) return flags;
    const Eigen::VectorXd r = intrinsic_rewards(obs);
    for (std::size_t i = 0; i < obs.size(); ++i) flags[i] = novelty_score(r(static_cast<Eigen::Index>(i))) > beta;
    return flags;
  }

  // Mean over samples of the per-output squared error, on already normalized inputs.
  double loss_and_gradient(const Eigen::MatrixXd& normalized, Eigen::VectorXd* grad) const {
    Mlp::Tape tape;
    const Eigen::MatrixXd pred = net_.forward(predictor_.data(), normalized, tape);
    const Eigen::MatrixXd diff = pred - net_.forward(target_.data(), normalized);
    const double scale = 1.0 / (static_cast<double>(normalized.cols()) * config_.output);
    if (grad) {
      grad->setZero(predictor_.size());
      net_.backward(predictor_.data(), tape, (2.0 * scale) * diff, grad->data(), false);
    }
    return diff.squaredNorm() * scale;
  }

  // Updates both normalizers from the batch, then takes one predictor step per
  // mini-batch (skipped when train_predictor is false). Returns the mean
  // pre-step mini-batch loss.
  double update(std::span<const Observation> batch, bool train_predictor = true) {
    if (batch.empty()) throw ContractViolation("RND update needs a nonempty batch");
    const Eigen::MatrixXd x = observations_to_matrix(batch, config_.input_cells);
    obs_stats_.update(x);
    const Eigen::MatrixXd z = normalize(x);
    reward_stats_.update(rewards_of(z).transpose());

    double sum = 0.0;
    std::size_t batches = 0;
    Eigen::VectorXd grad;
    const Eigen::Index bs = config_.batch_size;
    for (Eigen::Index start = 0; start < z.cols(); start += bs) {
      const Eigen::Index width = std::min(bs, z.cols() - start);
      const Eigen::MatrixXd chunk = z.middleCols(start, width);
      const double loss = loss_and_gradient(chunk, train_predictor ? &grad : nullptr);
      if (!std::isfinite(loss) || (train_predictor && !grad.allFinite())) {
        std::ostringstream msg;
        msg << "RND predictor loss is not finite (mini-batch " << batches << ", loss " << loss
            << ", learning rate " << optimizer_.learning_rate << ")";
        throw TrainingError(msg.str());
      }
      if (train_predictor) optimizer_.step(predictor_, grad);
      sum += loss;
      ++batches;
    }
    return sum / static_cast<double>(batches);
  }

  void save(const std::string& path) const {
    nlohmann::json header = {{"kind", "rnd"}, {"version", 1}, {"network", net_.describe()},
                             {"obs_count", obs_stats_.count()}, {"reward_count", reward_stats_.count()}};
    write_checkpoint(path, header,
                     {{"target", target_},
                      {"predictor", predictor_},
                      {"obs_mean", obs_stats_.mean()},
                      {"obs_m2", obs_stats_.m2()},
                      {"reward_mean", reward_stats_.mean()},
                      {"reward_m2", reward_stats_.m2()}});
  }

  void load(const std::string& path) {
    const LoadedCheckpoint ck = read_checkpoint(path);
    if (ck.header.value("kind", "") != "rnd") throw DecodeError("not an RND checkpoint");
    if (ck.header.at("network") != net_.describe()) throw DecodeError("RND checkpoint layer shapes do not match");
    const auto n = static_cast<Eigen::Index>(net_.param_count());
    if (ck.buffer("target").size() != n || ck.buffer("predictor").size() != n ||
        ck.buffer("obs_mean").size() != config_.input_cells || ck.buffer("obs_m2").size() != config_.input_cells ||
        ck.buffer("reward_mean").size() != 1 || ck.buffer("reward_m2").size() != 1)
      throw DecodeError("RND checkpoint buffer sizes do not match");
    target_ = ck.buffer("target");
    predictor_ = ck.buffer("predictor");
    obs_stats_.restore(ck.header.at("obs_count").get<double>(), ck.buffer("obs_mean"), ck.buffer("obs_m2"));
    reward_stats_.restore(ck.header.at("reward_count").get<double>(), ck.buffer("reward_mean"),
                          ck.buffer("reward_m2"));
  }

 private:
  Eigen::VectorXd rewards_of(const Eigen::MatrixXd& normalized) const {
    const Eigen::MatrixXd diff = net_.forward(predictor_.data(), normalized) - net_.forward(target_.data(), normalized);
    return diff.colwise().squaredNorm().transpose();
  }

  RndConfig config_;
  Mlp net_;
  Eigen::VectorXd target_;
  Eigen::VectorXd predictor_;
  RunningMeanVar obs_stats_;
  RunningMeanVar reward_stats_;
  MomentumSgd optimizer_;
};

struct NovelState {
  Observation observation;
  Snapshot snapshot;
};

// Bounded FIFO of states flagged novel.
class NoveltyBuffer {
 public:
  explicit NoveltyBuffer(std::size_t capacity = 10'000) : capacity_(capacity) {
    if (capacity == 0) throw ContractViolation("novelty buffer capacity must be positive");
  }

  void push(NovelState s) {
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(std::move(s));
  }

  // Up to `count` distinct entries, uniformly without replacement. Entries stay in the buffer.
  std::vector<NovelState> sample(std::size_t count, Rng& rng) const {
    std::vector<std::size_t> idx(items_.size());
    std::iota(idx.begin(), idx.end(), 0);
    const std::size_t take = std::min(count, idx.size());
    std::vector<NovelState> out;
    out.reserve(take);
    for (std::size_t k = 0; k < take; ++k) {
      std::swap(idx[k], idx[k + uniform_index(rng, idx.size() - k)]);
      out.push_back(items_[idx[k]]);
    }
    return out;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }
  const NovelState& operator[](std::size_t i) const { return items_[i]; }

 private:
  std::size_t capacity_;
  std::deque<NovelState> items_;
};

}  // namespace rbx
