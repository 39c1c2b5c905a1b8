#pragma once

// Persistent-MDP interface: deterministic step dynamics plus exact save/restore
// of the full simulator state. Rewards are identically zero in this setting, so
// a transition reports only the next observation and whether the agent died.

#include <array>
#include <concepts>
#include <cstdint>
#include <set>
#include <string_view>
#include <vector>

#include "rbx/errors.hpp"
#include "rbx/observation.hpp"

namespace rbx {

// Joystick action set: no-op, four directions and two buttons.
enum class Action : std::uint8_t { Noop = 0, Left, Right, Up, Down, A, B };

inline constexpr int kActionCount = 7;

inline Action action_from_index(int index) {
  if (index < 0 || index >= kActionCount)
    throw ContractViolation("action index out of range [0, 6]: " + std::to_string(index));
  return static_cast<Action>(index);
}

inline int action_index(Action a) { return static_cast<int>(a); }

inline std::string_view action_name(Action a) {
  static constexpr std::array<std::string_view, kActionCount> names = {"noop", "left", "right",
                                                                       "up",   "down", "A",
                                                                       "B"};
  return names[static_cast<std::size_t>(a)];
}

struct StepResult {
  Observation observation;
  bool terminated = false;
  int env_steps_consumed = 1;
};

// Versioned flat serialization of an environment state. Immutable once produced.
struct Snapshot {
  std::uint32_t version = 0;
  std::vector<std::uint8_t> bytes;

  friend bool operator==(const Snapshot&, const Snapshot&) = default;
};

template <class E>
concept PersistentMdp = std::copy_constructible<E> && requires(E env, const E cenv, Action a,
                                                              const Snapshot& snap) {
  { env.reset() } -> std::same_as<StepResult>;
  { env.step(a) } -> std::same_as<StepResult>;
  { cenv.save_snapshot() } -> std::same_as<Snapshot>;
  { env.restore_snapshot(snap) } -> std::same_as<StepResult>;
  { cenv.observe() } -> std::same_as<Observation>;
  { cenv.terminated() } -> std::same_as<bool>;
};

// Unit bookkeeping used only by coverage metrics and test oracles. Exploration
// models never see these values.
using UnitId = std::uint32_t;

template <class E>
concept UnitAccounting = PersistentMdp<E> && requires(const E cenv, const Snapshot& snap) {
  { cenv.unit_of() } -> std::same_as<UnitId>;
  { cenv.unit_of_snapshot(snap) } -> std::same_as<UnitId>;
  { cenv.lifetime_steps() } -> std::convertible_to<std::uint64_t>;
};

// Percentage of the maximally visitable units that were visited.
inline double coverage(const std::set<UnitId>& visited, const std::set<UnitId>& full) {
  if (full.empty()) return 0.0;
  std::size_t hit = 0;
  for (UnitId u : visited) hit += full.count(u);
  return 100.0 * static_cast<double>(hit) / static_cast<double>(full.size());
}

}  // namespace rbx
