#pragma once

// Reachability-style similarity R(a, b) in (0, 1): a shared encoder embeds both
// observations, a head classifies the concatenated embeddings. Trained with
// binary cross-entropy on pairs labelled by their distance along a trajectory.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rbx/errors.hpp"
#include "rbx/mlp.hpp"
#include "rbx/observation.hpp"
#include "rbx/rng.hpp"
#include "rbx/running_stats.hpp"

namespace rbx {

struct PairExample {
  Observation a;
  Observation b;
  int label = 0;
};

struct PairDataset {
  std::vector<PairExample> examples;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  std::size_t positives() const {
    return static_cast<std::size_t>(std::count_if(examples.begin(), examples.end(),
                                                  [](const PairExample& e) { return e.label == 1; }));
  }
  std::size_t negatives() const { return size() - positives(); }
  bool has_both_classes() const { return positives() > 0 && negatives() > 0; }
  double positive_ratio() const { return empty() ? 0.0 : static_cast<double>(positives()) / size(); }

  void append(const PairDataset& other) {
    examples.insert(examples.end(), other.examples.begin(), other.examples.end());
  }
};

// Label of trajectory indices (i, j): 1 when |i - j| < n, 0 when |i - j| > N,
// nothing in between.
inline std::optional<int> pair_label(std::size_t i, std::size_t j, int n, int N) {
  const std::size_t d = i > j ? i - j : j - i;
  if (d < static_cast<std::size_t>(n)) return 1;
  if (d > static_cast<std::size_t>(N)) return 0;
  return std::nullopt;
}

struct IndexPair {
  std::size_t i = 0;
  std::size_t j = 0;
  int label = 0;
};

// Samples up to `count` labelled index pairs from a trajectory of `length`
// states: ceil(count/2) positives and floor(count/2) negatives, or positives
// only when no pair is more than N apart. Each pair's order is a coin flip.
inline std::vector<IndexPair> sample_index_pairs(std::size_t length, int n, int N, std::size_t count,
                                                 Rng& rng) {
  if (n < 1 || n >= N) throw ContractViolation("pair generation requires 1 <= n < N");
  const bool negatives_possible = length >= static_cast<std::size_t>(N) + 2;
  std::vector<IndexPair> out;
  if (length == 0 || (length < static_cast<std::size_t>(n) + 1 && !negatives_possible)) return out;

  const std::size_t want_neg = negatives_possible ? count / 2 : 0;
  const std::size_t want_pos = count - count / 2;
  out.reserve(want_pos + want_neg);

  for (std::size_t k = 0; k < want_pos; ++k) {
    const std::size_t i = uniform_index(rng, length);
    const std::size_t lo = i >= static_cast<std::size_t>(n - 1) ? i - (n - 1) : 0;
    const std::size_t hi = std::min(length - 1, i + (n - 1));
    const std::size_t j = lo + uniform_index(rng, hi - lo + 1);
    out.push_back({i, j, 1});
  }
  if (want_neg > 0) {
    // Index i has partners below i - N and above i + N.
    std::vector<std::size_t> admissible;
    for (std::size_t i = 0; i < length; ++i)
      if (i > static_cast<std::size_t>(N) || i + N + 1 < length) admissible.push_back(i);
    for (std::size_t k = 0; k < want_neg; ++k) {
      const std::size_t i = admissible[uniform_index(rng, admissible.size())];
      const std::size_t below = i > static_cast<std::size_t>(N) ? i - N : 0;
      const std::size_t above = i + N + 1 < length ? length - (i + N + 1) : 0;
      const std::size_t pick = uniform_index(rng, below + above);
      const std::size_t j = pick < below ? pick : i + N + 1 + (pick - below);
      out.push_back({i, j, 0});
    }
  }
  for (auto& p : out)
    if (coin(rng)) std::swap(p.i, p.j);
  return out;
}

inline PairDataset generate_pairs(std::span<const Observation> trajectory, int n, int N, std::size_t count,
                                  Rng& rng) {
  PairDataset ds;
  for (const auto& p : sample_index_pairs(trajectory.size(), n, N, count, rng)) {
    // A revisited frame is zero steps from itself; such negatives would contradict the positives.
    if (p.label == 0 && trajectory[p.i] == trajectory[p.j]) continue;
    ds.examples.push_back({trajectory[p.i], trajectory[p.j], p.label});
  }
  return ds;
}

// Path length between trajectory state `traj_index` and prefix state
// `prefix_index` when the trajectory starts where the prefix ends.
inline std::size_t prefix_pair_distance(std::size_t traj_index, std::size_t prefix_index,
                                        std::size_t prefix_length) {
  return traj_index + (prefix_length - 1 - prefix_index);
}

struct PrefixPair {
  std::size_t traj_index = 0;
  std::size_t prefix_index = 0;
};

// Samples `count` (trajectory, prefix) index pairs whose combined path distance exceeds N.
inline std::vector<PrefixPair> sample_prefix_pairs(std::size_t traj_length, std::size_t prefix_length, int N,
                                                   std::size_t count, Rng& rng) {
  std::vector<PrefixPair> out;
  if (traj_length == 0 || prefix_length == 0) return out;
  // Prefix indices k < prefix_length - 1 - N + i are far enough from trajectory index i.
  auto admissible_k = [&](std::size_t i) -> std::size_t {
    const long long bound = static_cast<long long>(prefix_length) - 1 - N + static_cast<long long>(i);
    return static_cast<std::size_t>(std::clamp<long long>(bound, 0, static_cast<long long>(prefix_length)));
  };
  std::vector<std::size_t> admissible;
  for (std::size_t i = 0; i < traj_length; ++i)
    if (admissible_k(i) > 0) admissible.push_back(i);
  if (admissible.empty()) return out;
  for (std::size_t c = 0; c < count; ++c) {
    const std::size_t i = admissible[uniform_index(rng, admissible.size())];
    out.push_back({i, uniform_index(rng, admissible_k(i))});
  }
  return out;
}

inline PairDataset generate_prefix_negatives(std::span<const Observation> trajectory,
                                             std::span<const Observation> full_prefix, int N, std::size_t count,
                                             Rng& rng) {
  PairDataset ds;
  for (const auto& p : sample_prefix_pairs(trajectory.size(), full_prefix.size(), N, count, rng)) {
    PairExample e{trajectory[p.traj_index], full_prefix[p.prefix_index], 0};
    if (coin(rng)) std::swap(e.a, e.b);
    if (e.a == e.b) continue;
    ds.examples.push_back(std::move(e));
  }
  return ds;
}

struct SimilarityConfig {
  int input_cells = 24 * 24;
  int encoder_hidden = 128;
  int embedding_dim = 64;
  int head_hidden = 64;
  Activation activation = Activation::Tanh;
  // Per-cell standardization of encoder inputs from running statistics of the
  // training observations. Variance floor and clip bound below.
  bool normalize_inputs = true;
  double input_variance_floor = 1e-2;
  double input_clip = 5.0;
};

struct TrainOptions {
  int epochs = 4;
  int batch_size = 64;
  double learning_rate = 0.03;
  double momentum = 0.9;
};

inline constexpr double kProbabilityClamp = 1e-7;

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Binary cross-entropy with the probability clamped to [1e-7, 1 - 1e-7].
inline double clamped_bce(double p, int label) {
  const double q = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return label == 1 ? -std::log(q) : -std::log(1.0 - q);
}

class SimilarityModel {
 public:
  SimilarityModel(SimilarityConfig config, Rng& rng)
      : config_(config),
        encoder_({{config.input_cells, config.encoder_hidden, config.activation},
                  {config.encoder_hidden, config.embedding_dim, config.activation}}),
        head_({{2 * config.embedding_dim, config.head_hidden, config.activation},
               {config.head_hidden, 1, Activation::Identity}}),
        input_stats_(config.input_cells) {
    params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(encoder_.param_count() + head_.param_count()));
    encoder_.initialize(params_.data(), rng);
    // Small output weights and zero bias start every prediction near 0.5.
    head_.initialize(head_params(), rng, 0.01);
  }

  const SimilarityConfig& config() const { return config_; }
  const Mlp& encoder() const { return encoder_; }
  const Mlp& head() const { return head_; }

  const Eigen::VectorXd& parameters() const { return params_; }
  // Mutable access bumps the version so cached embeddings are invalidated.
  Eigen::VectorXd& mutable_parameters() {
    ++version_;
    return params_;
  }
  std::uint64_t version() const { return version_; }
  std::uint64_t parameter_hash() const { return hash_parameters(params_); }

  const RunningMeanVar& input_stats() const { return input_stats_; }

  // Folds observations into the input statistics; changes the model function.
  void update_input_stats(std::span<const Observation> obs) {
    if (!config_.normalize_inputs || obs.empty()) return;
    input_stats_.update(observations_to_matrix(obs, config_.input_cells));
    ++version_;
  }

  // Encoder input matrix: identity before any statistics update.
  Eigen::MatrixXd encoder_input(std::span<const Observation> obs) const {
    Eigen::MatrixXd x = observations_to_matrix(obs, config_.input_cells);
    if (!config_.normalize_inputs || input_stats_.count() == 0) return x;
    const Eigen::ArrayXd inv_std = (input_stats_.variance().array() + config_.input_variance_floor).rsqrt();
    x = ((x.colwise() - input_stats_.mean()).array().colwise() * inv_std).matrix();
    return x.cwiseMax(-config_.input_clip).cwiseMin(config_.input_clip);
  }

  Eigen::MatrixXd embed(std::span<const Observation> obs) const {
    return encoder_.forward(params_.data(), encoder_input(obs));
  }

  Eigen::VectorXd embed(const Observation& obs) const { return embed(std::span<const Observation>(&obs, 1)).col(0); }

  // R for pre-computed embeddings: one column per pair.
  Eigen::VectorXd predict_embedded(const Eigen::MatrixXd& ea, const Eigen::MatrixXd& eb) const {
    Eigen::MatrixXd h(2 * config_.embedding_dim, ea.cols());
    h << ea, eb;
    const Eigen::MatrixXd z = head_.forward(head_params(), h);
    // Clamped so the output stays strictly inside (0, 1) for saturated logits.
    return z.row(0).transpose().unaryExpr(
        [](double v) { return std::clamp(sigmoid(v), kProbabilityClamp, 1.0 - kProbabilityClamp); });
  }

  double predict_embedded(const Eigen::VectorXd& ea, const Eigen::VectorXd& eb) const {
    return predict_embedded(Eigen::MatrixXd(ea), Eigen::MatrixXd(eb))(0);
  }

  // The head's first layer acts on [ea; eb] and so splits into a term for each
  // embedding. Scoring one query against many cached centers then needs only
  // head_finish(first_term(center) + second_term(query)) per pair.
  Eigen::MatrixXd head_first_term(const Eigen::MatrixXd& ea) const {
    const Eigen::Index d = config_.embedding_dim;
    Eigen::MatrixXd z = head_.weights(head_params(), 0).leftCols(d) * ea;
    z.colwise() += head_.bias(head_params(), 0);
    return z;
  }
  Eigen::MatrixXd head_second_term(const Eigen::MatrixXd& eb) const {
    return head_.weights(head_params(), 0).rightCols(config_.embedding_dim) * eb;
  }
  double head_finish(const Eigen::VectorXd& pre_activation) const {
    Eigen::VectorXd h = pre_activation;
    Mlp::activate(head_.layers()[0].act, h);
    for (std::size_t i = 1; i < head_.layers().size(); ++i) {
      Eigen::VectorXd z = head_.weights(head_params(), i) * h + head_.bias(head_params(), i);
      Mlp::activate(head_.layers()[i].act, z);
      h = std::move(z);
    }
    return std::clamp(sigmoid(h(0)), kProbabilityClamp, 1.0 - kProbabilityClamp);
  }

  double predict(const Observation& a, const Observation& b) const {
    const std::array<Observation, 2> both{a, b};
    const Eigen::MatrixXd e = embed(both);
    return predict_embedded(Eigen::VectorXd(e.col(0)), Eigen::VectorXd(e.col(1)));
  }

  // Mean clamped BCE over the batch. When `grad` is given it receives the exact
  // gradient of that loss with respect to parameters().
  double loss_and_gradient(std::span<const PairExample> batch, Eigen::VectorXd* grad) const {
    const auto count = static_cast<Eigen::Index>(batch.size());
    std::vector<Observation> as, bs;
    as.reserve(batch.size());
    bs.reserve(batch.size());
    for (const auto& e : batch) as.push_back(e.a), bs.push_back(e.b);

    Mlp::Tape tape_a, tape_b, tape_h;
    const Eigen::MatrixXd ea = encoder_.forward(params_.data(), encoder_input(as), tape_a);
    const Eigen::MatrixXd eb = encoder_.forward(params_.data(), encoder_input(bs), tape_b);
    Eigen::MatrixXd h(2 * config_.embedding_dim, count);
    h << ea, eb;
    const Eigen::MatrixXd z = head_.forward(head_params(), h, tape_h);

    double loss = 0.0;
    Eigen::MatrixXd dz(1, count);
    for (Eigen::Index k = 0; k < count; ++k) {
      const double p = sigmoid(z(0, k));
      const int y = batch[static_cast<std::size_t>(k)].label;
      loss += clamped_bce(p, y);
      // Derivative of the clamped loss: zero where the clamp is active.
      const bool clamped = p < kProbabilityClamp || p > 1.0 - kProbabilityClamp;
      dz(0, k) = clamped ? 0.0 : (p - y) / static_cast<double>(count);
    }
    loss /= static_cast<double>(count);

    if (grad) {
      grad->setZero(params_.size());
      const Eigen::MatrixXd dh = head_.backward(head_params(), tape_h, dz, grad->data() + encoder_.param_count());
      const Eigen::Index d = config_.embedding_dim;
      encoder_.backward(params_.data(), tape_a, dh.topRows(d), grad->data(), false);
      encoder_.backward(params_.data(), tape_b, dh.bottomRows(d), grad->data(), false);
    }
    return loss;
  }

  MomentumSgd& optimizer() { return optimizer_; }

  void save(const std::string& path) const {
    nlohmann::json header = {{"kind", "similarity"},
                             {"version", 1},
                             {"embedding_dim", config_.embedding_dim},
                             {"encoder", encoder_.describe()},
                             {"head", head_.describe()},
                             {"normalize_inputs", config_.normalize_inputs},
                             {"input_count", input_stats_.count()}};
    write_checkpoint(path, header,
                     {{"parameters", params_}, {"input_mean", input_stats_.mean()}, {"input_m2", input_stats_.m2()}});
  }

  // Loads parameters saved from a model of identical shape.
  void load(const std::string& path) {
    const LoadedCheckpoint ck = read_checkpoint(path);
    if (ck.header.value("kind", "") != "similarity") throw DecodeError("not a similarity checkpoint");
    if (ck.header.at("encoder") != encoder_.describe() || ck.header.at("head") != head_.describe() ||
        ck.header.at("embedding_dim").get<int>() != config_.embedding_dim)
      throw DecodeError("similarity checkpoint layer shapes do not match this model");
    const Eigen::VectorXd& p = ck.buffer("parameters");
    if (p.size() != params_.size()) throw DecodeError("similarity checkpoint parameter count mismatch");
    if (ck.header.value("normalize_inputs", false) != config_.normalize_inputs)
      throw DecodeError("similarity checkpoint input normalization does not match this model");
    const Eigen::VectorXd& mean = ck.buffer("input_mean");
    const Eigen::VectorXd& m2 = ck.buffer("input_m2");
    if (mean.size() != config_.input_cells || m2.size() != config_.input_cells)
      throw DecodeError("similarity checkpoint input statistics have the wrong size");
    input_stats_.restore(ck.header.at("input_count").get<double>(), mean, m2);
    mutable_parameters() = p;
  }

 private:
  const double* head_params() const { return params_.data() + encoder_.param_count(); }
  double* head_params() { return params_.data() + encoder_.param_count(); }

  SimilarityConfig config_;
  Mlp encoder_;
  Mlp head_;
  Eigen::VectorXd params_;
  RunningMeanVar input_stats_;
  MomentumSgd optimizer_;
  std::uint64_t version_ = 0;
};

// Mini-batch SGD with momentum on the clamped BCE. The dataset's observations
// are first folded into the input statistics. Momentum carries over between
// calls (the model is trained continually). Returns the mean loss of each epoch.
inline std::vector<double> train(SimilarityModel& model, const PairDataset& data, const TrainOptions& opt, Rng& rng) {
  if (!data.has_both_classes()) throw ContractViolation("similarity training needs both classes in the dataset");
  if (opt.batch_size < 1 || opt.epochs < 0) throw ContractViolation("invalid training options");
  model.optimizer().learning_rate = opt.learning_rate;
  model.optimizer().momentum = opt.momentum;
  {
    std::vector<Observation> seen;
    seen.reserve(2 * data.size());
    for (const auto& e : data.examples) seen.push_back(e.a), seen.push_back(e.b);
    model.update_input_stats(seen);
  }

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> history;
  std::vector<PairExample> batch;
  Eigen::VectorXd grad;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opt.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size));
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(data.examples[order[k]]);
      const double loss = model.loss_and_gradient(batch, &grad);
      if (!std::isfinite(loss) || !grad.allFinite()) {
        std::ostringstream msg;
        msg << "similarity loss is not finite (epoch " << epoch << ", batch " << batches << ", loss " << loss
            << ", learning rate " << opt.learning_rate << "); lower the learning rate";
        throw TrainingError(msg.str());
      }
      model.optimizer().step(model.mutable_parameters(), grad);
      sum += loss;
      ++batches;
    }
    history.push_back(batches ? sum / static_cast<double>(batches) : 0.0);
  }
  return history;
}

}  // namespace rbx
