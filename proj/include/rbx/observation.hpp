#pragma once

#include <algorithm>
#include <cstddef>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "rbx/errors.hpp"

namespace rbx {

// Immutable rows x cols grid of intensities in [0, 1], row-major.
// Copies share storage, so trajectories, prefixes and pair datasets can hold
// many references to the same frame cheaply.
class Observation {
 public:
  Observation() = default;

  Observation(int rows, int cols, std::vector<float> values)
      : rows_(rows), cols_(cols) {
    if (rows <= 0 || cols <= 0 || values.size() != static_cast<std::size_t>(rows) * cols)
      throw ContractViolation("observation shape does not match value count");
    values_ = std::make_shared<const std::vector<float>>(std::move(values));
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return values_ ? values_->size() : 0; }
  bool empty() const { return !values_; }

  std::span<const float> values() const {
    return values_ ? std::span<const float>(*values_) : std::span<const float>();
  }
  float at(int r, int c) const { return (*values_)[static_cast<std::size_t>(r) * cols_ + c]; }

  // True when both handles point at the same frame buffer.
  bool shares_storage(const Observation& other) const { return values_ == other.values_; }
  const void* storage_id() const { return values_.get(); }

  friend bool operator==(const Observation& a, const Observation& b) {
    if (a.rows_ != b.rows_ || a.cols_ != b.cols_) return false;
    if (a.values_ == b.values_) return true;
    if (!a.values_ || !b.values_) return false;
    return *a.values_ == *b.values_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::shared_ptr<const std::vector<float>> values_;
};

}  // namespace rbx
