#pragma once

#include <Eigen/Dense>

#include <utility>

namespace rbx {

// Running per-dimension mean and population variance. Batches are merged with
// the pairwise (Chan et al.) update so long streams stay numerically stable.
class RunningMeanVar {
 public:
  explicit RunningMeanVar(Eigen::Index dim = 1)
      : mean_(Eigen::VectorXd::Zero(dim)), m2_(Eigen::VectorXd::Zero(dim)) {}

  // Columns of `batch` are samples.
  void update(const Eigen::MatrixXd& batch) {
    const auto nb = static_cast<double>(batch.cols());
    if (nb == 0) return;
    const Eigen::VectorXd batch_mean = batch.rowwise().mean();
    const Eigen::VectorXd batch_m2 = (batch.colwise() - batch_mean).array().square().rowwise().sum();
    const double na = count_;
    const double n = na + nb;
    const Eigen::VectorXd delta = batch_mean - mean_;
    mean_ += delta * (nb / n);
    m2_ += batch_m2 + delta.array().square().matrix() * (na * nb / n);
    count_ = n;
  }

  double count() const { return count_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  Eigen::VectorXd variance() const {
    return count_ > 0 ? Eigen::VectorXd(m2_ / count_) : Eigen::VectorXd::Zero(mean_.size());
  }
  const Eigen::VectorXd& m2() const { return m2_; }

  void restore(double count, Eigen::VectorXd mean, Eigen::VectorXd m2) {
    count_ = count;
    mean_ = std::move(mean);
    m2_ = std::move(m2);
  }

 private:
  double count_ = 0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
};

}  // namespace rbx
