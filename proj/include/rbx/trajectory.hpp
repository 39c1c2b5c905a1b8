#pragma once

#include <cstdint>
#include <vector>

#include "rbx/observation.hpp"
#include "rbx/pmdp.hpp"

namespace rbx {

struct TrajectoryStep {
  Observation observation;
  Snapshot snapshot;
  UnitId unit = 0;  // ground truth for coverage metrics only; never shown to models
};

// States reached by one rollout, in order. A fatal final step is not part of
// `steps`; it is reported through `died` and counted in `env_steps`.
struct Trajectory {
  std::vector<TrajectoryStep> steps;
  bool died = false;
  std::uint64_t env_steps = 0;

  std::size_t size() const { return steps.size(); }
  bool empty() const { return steps.empty(); }

  std::vector<Observation> observations() const {
    std::vector<Observation> out;
    out.reserve(steps.size());
    for (const auto& s : steps) out.push_back(s.observation);
    return out;
  }
};

}  // namespace rbx
