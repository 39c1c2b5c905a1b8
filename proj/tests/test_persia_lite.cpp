#include <gtest/gtest.h>

#include <map>
#include <regex>

#include "support.hpp"

using namespace rbx;
using rbx::testing::kAllTiles;
using rbx::testing::kTwinRooms;

namespace {

std::vector<Action> random_actions(Rng& rng, std::size_t n) {
  std::vector<Action> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(action_from_index(static_cast<int>(uniform_index(rng, kActionCount))));
  return out;
}

// Replays actions, stopping at death; returns the observation and termination sequence.
std::vector<std::pair<Observation, bool>> replay(PersiaLite& env, const std::vector<Action>& actions) {
  std::vector<std::pair<Observation, bool>> out;
  for (Action a : actions) {
    auto r = env.step(a);
    out.emplace_back(r.observation, r.terminated);
    if (r.terminated) break;
  }
  return out;
}

int header_count(const LevelSpec& spec, const std::string& label) {
  const std::regex re("^// " + label + ": (\\d+)");
  for (const auto& c : spec.comments) {
    std::smatch m;
    if (std::regex_search(c, m, re)) return std::stoi(m[1]);
  }
  return -1;
}

}  // namespace

TEST(Actions, SevenJoystickActions) {
  EXPECT_EQ(kActionCount, 7);
  EXPECT_EQ(action_from_index(6), Action::B);
  EXPECT_THROW(action_from_index(7), ContractViolation);
  EXPECT_THROW(action_from_index(-1), ContractViolation);
}

TEST(Reset, Deterministic) {
  auto env = PersiaLite::load(kAllTiles);
  const auto a = env.reset();
  env.step(Action::Right);
  const auto b = env.reset();
  EXPECT_EQ(a.observation, b.observation);
  EXPECT_FALSE(b.terminated);
  EXPECT_EQ(env.state().row, 1);
  EXPECT_EQ(env.state().col, 1);
}

TEST(Reset, SnapshotIdentity) {
  auto env = PersiaLite::load(kAllTiles);
  const auto r = env.reset();
  const Snapshot s0 = env.save_snapshot();
  env.step(Action::Down);
  EXPECT_EQ(env.restore_snapshot(s0).observation, r.observation);
}

TEST(Step, NoopKeepsPositionAndCountsStep) {
  auto env = PersiaLite::load(kAllTiles);
  const EnvState before = env.state();
  const auto r = env.step(Action::Noop);
  EXPECT_EQ(env.state().row, before.row);
  EXPECT_EQ(env.state().col, before.col);
  EXPECT_EQ(env.state().step_count, before.step_count + 1);
  EXPECT_EQ(r.env_steps_consumed, 1);
}

TEST(Step, WallBlocks) {
  auto env = PersiaLite::load("###\n#I#\n###\n");
  const auto r = env.step(Action::Right);
  EXPECT_FALSE(r.terminated);
  EXPECT_EQ(env.state().col, 1);
}

TEST(Step, TrapKillsAndBlocksFurtherSteps) {
  auto env = PersiaLite::load("I\nT\n");
  const Snapshot alive = env.save_snapshot();
  EXPECT_TRUE(env.step(Action::Down).terminated);
  EXPECT_TRUE(env.terminated());
  EXPECT_THROW(env.step(Action::Noop), ContractViolation);
  EXPECT_THROW(env.unit_of(), ContractViolation);
  EXPECT_FALSE(env.restore_snapshot(alive).terminated);
  EXPECT_NO_THROW(env.step(Action::Noop));
}

TEST(Step, JumpClearsTrap) {
  auto env = PersiaLite::load("I.T.\n");
  env.step(Action::Right);  // faces right, now at column 1
  EXPECT_FALSE(env.step(Action::A).terminated);
  EXPECT_EQ(env.state().col, 3);
}

TEST(Step, PlateOpensDoorPermanently) {
  auto env = PersiaLite::load(kAllTiles);
  const Snapshot before = env.save_snapshot();
  env.step(Action::Right);
  env.step(Action::Right);  // on the plate at (1,3)
  EXPECT_EQ(env.state().doors_open & 1U, 1U);
  const Observation opened = env.observe();
  env.step(Action::Left);
  env.step(Action::Down);
  EXPECT_EQ(env.state().doors_open & 1U, 1U);
  env.step(Action::Right);
  env.step(Action::Right);  // through the door
  EXPECT_EQ(env.state().col, 4);
  env.restore_snapshot(before);
  EXPECT_EQ(env.state().doors_open, 0U);
  EXPECT_NE(env.observe(), opened);
}

TEST(Step, LockedDoorNeedsKey) {
  auto env = PersiaLite::load(kAllTiles);
  for (Action a : {Action::Right, Action::Right, Action::Left, Action::Down, Action::Right, Action::Right, Action::Right,
                   Action::Down, Action::Right, Action::Down})
    env.step(a);
  // At (3,6) without the key: the locked door below stays shut.
  EXPECT_EQ(env.state().row, 3);
  EXPECT_EQ(env.state().col, 6);
  env.step(Action::Down);
  EXPECT_EQ(env.state().row, 3);
  for (Action a : {Action::Up, Action::Up, Action::Left, Action::Right, Action::Down, Action::Down, Action::Down})
    env.step(a);
  EXPECT_NE(env.state().keys_held, 0U);
  EXPECT_EQ(env.state().row, 4);
  env.step(Action::Down);
  EXPECT_EQ(env.state().row, 5);
}

TEST(Snapshot, StepAfterRestoreIsIdentical) {
  auto env = PersiaLite::load(kAllTiles);
  const Snapshot s = env.save_snapshot();
  const auto a = env.step(Action::Right);
  env.restore_snapshot(s);
  const auto b = env.step(Action::Right);
  EXPECT_EQ(a.observation, b.observation);
  EXPECT_EQ(a.terminated, b.terminated);
}

TEST(Snapshot, InitialSnapshotDecodesToInitialState) {
  auto env = PersiaLite::load(kAllTiles);
  const EnvState s = decode_state(env.level(), env.save_snapshot());
  EXPECT_EQ(s, initial_state(env.level()));
  EXPECT_EQ(s.row, env.level().init().row);
  EXPECT_EQ(s.col, env.level().init().col);
}

TEST(Snapshot, ReplayAfterRandomWalkIsByteEqual) {
  auto env = rbx::testing::load_bundled("L1");
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    env.reset();
    for (Action a : random_actions(rng, 100)) {
      if (env.step(a).terminated) env.reset();
    }
    const Snapshot snap = env.save_snapshot();
    const auto actions = random_actions(rng, 50);
    env.restore_snapshot(snap);
    const auto first = replay(env, actions);
    env.restore_snapshot(snap);
    const auto second = replay(env, actions);
    ASSERT_EQ(first.size(), second.size());
    for (std::size_t i = 0; i < first.size(); ++i) {
      ASSERT_EQ(first[i].first, second[i].first);
      ASSERT_EQ(first[i].second, second[i].second);
    }
  }
}

TEST(Snapshot, RestoreThenSaveIsStable) {
  auto env = rbx::testing::load_bundled("L1");
  Rng rng(3);
  for (Action a : random_actions(rng, 40))
    if (env.step(a).terminated) env.reset();
  const Snapshot s = env.save_snapshot();
  env.reset();
  env.restore_snapshot(s);
  EXPECT_EQ(env.save_snapshot(), s);
  EXPECT_EQ(s.bytes.size(), 46U);
}

TEST(Snapshot, SavingHasNoSideEffect) {
  auto env = rbx::testing::load_bundled("L1");
  Rng rng(11);
  const auto actions = random_actions(rng, 200);
  const auto plain = replay(env, actions);
  env.reset();
  std::vector<std::pair<Observation, bool>> interleaved;
  for (Action a : actions) {
    (void)env.save_snapshot();
    auto r = env.step(a);
    (void)env.save_snapshot();
    interleaved.emplace_back(r.observation, r.terminated);
    if (r.terminated) break;
  }
  ASSERT_EQ(plain.size(), interleaved.size());
  for (std::size_t i = 0; i < plain.size(); ++i) EXPECT_EQ(plain[i].first, interleaved[i].first);
}

TEST(Snapshot, DeathThenRestoreContinues) {
  auto env = PersiaLite::load(kAllTiles);
  env.step(Action::Down);  // (2,1)
  const Snapshot mid = env.save_snapshot();
  env.step(Action::Right);
  EXPECT_TRUE(env.step(Action::Down).terminated);  // trap at (3,2)
  const auto r = env.restore_snapshot(mid);
  EXPECT_FALSE(r.terminated);
  EXPECT_FALSE(env.step(Action::Up).terminated);
}

TEST(Snapshot, DecodeErrors) {
  auto env = PersiaLite::load(kAllTiles);
  const Snapshot good = env.save_snapshot();

  Snapshot wrong_version = good;
  wrong_version.version = 99;
  EXPECT_THROW(env.restore_snapshot(wrong_version), DecodeError);

  Snapshot truncated = good;
  truncated.bytes.pop_back();
  EXPECT_THROW(env.restore_snapshot(truncated), DecodeError);

  auto other = PersiaLite::load(kTwinRooms);
  EXPECT_THROW(other.restore_snapshot(good), DecodeError);

  Snapshot on_wall = good;
  on_wall.bytes[8] = 0;  // row 0 is all wall
  EXPECT_THROW(env.restore_snapshot(on_wall), DecodeError);

  Snapshot bad_bits = good;
  bad_bits.bytes[14] = 0xff;  // more doors than the level has
  EXPECT_THROW(env.restore_snapshot(bad_bits), DecodeError);

  Snapshot bad_facing = good;
  bad_facing.bytes[12] = 9;
  EXPECT_THROW(env.restore_snapshot(bad_facing), DecodeError);

  // The environment is untouched by a failed restore.
  EXPECT_EQ(env.save_snapshot(), good);
}

TEST(Level, MinimalRoom) {
  const auto env = PersiaLite::load("...\n.I.\n...\n");
  EXPECT_EQ(env.level().unit_count(), 9U);
  EXPECT_EQ(reachable_units(env.level()).size(), 9U);
}

TEST(Level, ParseErrors) {
  auto error_at = [](const char* text) -> std::pair<int, int> {
    try {
      parse_level(text);
    } catch (const ParseError& e) {
      return {e.line(), e.column()};
    }
    return {0, 0};
  };
  EXPECT_EQ(error_at("I..\n.Q.\n"), std::make_pair(2, 2));                  // unknown tile
  EXPECT_EQ(error_at("I..\n..I\n"), std::make_pair(2, 3));                  // second init
  EXPECT_EQ(error_at("...\n...\n").first, 1);                               // no init
  EXPECT_EQ(error_at("I..\n..\n"), std::make_pair(2, 3));                   // ragged
  EXPECT_EQ(error_at("IPD\nlink: (0,1)->(0,0)\n"), std::make_pair(2, 14));  // link to a non-door
  EXPECT_EQ(error_at("IPD\n").first, 1);                                    // door without opener
  EXPECT_EQ(error_at("ILX\n").first, 1);                                    // locked door, no key
  EXPECT_EQ(error_at("IPD\nlink: 0,1 -> 0,2\n").first, 2);                  // malformed link
}

TEST(Level, SerializeRoundTrip) {
  const std::string text = rbx::testing::level_text("L1");
  const LevelSpec spec = parse_level(text);
  EXPECT_EQ(serialize_level(spec), text);
  EXPECT_EQ(parse_level(serialize_level(spec)), spec);
}

TEST(Level, BundledL1MatchesHeader) {
  const auto env = rbx::testing::load_bundled("L1");
  const Level& level = env.level();
  EXPECT_EQ(level.spec().name, "L1");
  EXPECT_EQ(static_cast<int>(level.unit_count()), header_count(level.spec(), "walkable tiles"));

  int traps = 0, plate_doors = 0, key_doors = 0;
  for (const auto& row : level.spec().grid)
    for (char t : row) traps += t == 'T', plate_doors += t == 'D', key_doors += t == 'L';
  EXPECT_EQ(traps, 2);
  EXPECT_EQ(plate_doors, 2);
  EXPECT_EQ(key_doors, 1);

  const auto full = reachable_units(level);
  EXPECT_EQ(static_cast<int>(full.size()), header_count(level.spec(), "reachable units"));
  EXPECT_GT(level.unit_count(), full.size());
}

TEST(Reachability, PlateLockedBehindItsOwnDoor) {
  // The only plate for the door sits in the room behind that door.
  const auto env = PersiaLite::load(
      "######\n"
      "#I.D.#\n"
      "#..#P#\n"
      "######\n"
      "link: (2,4)->(1,3)\n");
  const auto full = reachable_units(env.level());
  // Hand-counted: the four floor tiles of the left room.
  const std::set<UnitId> expected = {env.level().unit_at({1, 1}), env.level().unit_at({1, 2}),
                                     env.level().unit_at({2, 1}), env.level().unit_at({2, 2})};
  EXPECT_EQ(full, expected);
}

TEST(Reachability, TrapsAreExcluded) {
  const auto env = PersiaLite::load("I.T\n");
  EXPECT_EQ(reachable_units(env.level()).size(), 2U);
}

TEST(Reachability, StateCap) {
  const auto env = rbx::testing::load_bundled("L1");
  EXPECT_THROW(reachable_units(env.level(), 10), OracleError);
}

TEST(Coverage, Arithmetic) {
  std::set<UnitId> full;
  for (UnitId u = 0; u < 34; ++u) full.insert(u);
  std::set<UnitId> half;
  for (UnitId u = 0; u < 17; ++u) half.insert(u);
  EXPECT_DOUBLE_EQ(coverage({}, full), 0.0);
  EXPECT_DOUBLE_EQ(coverage(full, full), 100.0);
  EXPECT_DOUBLE_EQ(coverage(half, full), 50.0);
  EXPECT_DOUBLE_EQ(coverage({200, 201}, full), 0.0);
}

TEST(Units, FollowTheAgent) {
  auto env = PersiaLite::load(kAllTiles);
  const UnitId at_init = env.unit_of();
  EXPECT_EQ(at_init, env.level().unit_at({1, 1}));
  const Snapshot s = env.save_snapshot();
  env.step(Action::Right);
  EXPECT_EQ(env.level().unit_position(env.unit_of()).col, env.level().unit_position(at_init).col + 1);
  env.restore_snapshot(s);
  EXPECT_EQ(env.unit_of(), at_init);
  EXPECT_EQ(env.unit_of_snapshot(s), at_init);
}

TEST(Observation, ValuesAndPurity) {
  auto env = rbx::testing::load_bundled("L1");
  Rng rng(5);
  for (Action a : random_actions(rng, 300)) {
    if (env.step(a).terminated) env.reset();
    const Observation o = env.observe();
    ASSERT_EQ(o, env.observe());
    ASSERT_EQ(o.rows(), 24);
    ASSERT_EQ(o.cols(), 24);
    for (float v : o.values()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
  }
}

TEST(Observation, TwinRoomsDiffer) {
  auto env = PersiaLite::load(kTwinRooms);
  const Level& level = env.level();
  ASSERT_NE(level.room_at({1, 1}), level.room_at({1, 7}));
  // Same agent offset inside each room and the door open in both states.
  EnvState left = initial_state(level);
  left.row = 2, left.col = 2, left.doors_open = 1, left.plates_pressed = 1;
  EnvState right = left;
  right.col = 8;
  EXPECT_NE(render(level, left), render(level, right));
}

TEST(Observation, InjectiveOverRoomTileDoorsAndKeys) {
  const auto env = PersiaLite::load(kAllTiles);
  const Level& level = env.level();
  std::map<std::vector<float>, std::tuple<UnitId, std::uint64_t, std::uint64_t>> seen;
  const std::uint64_t door_states = 1ULL << level.door_count(), key_states = 1ULL << level.key_count();
  for (UnitId u = 0; u < level.unit_count(); ++u) {
    const GridPos p = level.unit_position(u);
    if (level.tile(p) == tile::kTrap) continue;
    for (std::uint64_t doors = 0; doors < door_states; ++doors)
      for (std::uint64_t keys = 0; keys < key_states; ++keys) {
        if (tile::is_door(level.tile(p)) && !((doors >> level.door_at(p)) & 1U)) continue;
        EnvState s = initial_state(level);
        s.row = p.row, s.col = p.col, s.doors_open = doors, s.keys_held = keys;
        const Observation o = render(level, s);
        const std::vector<float> v(o.values().begin(), o.values().end());
        const auto key = std::make_tuple(u, doors, keys);
        auto [it, fresh] = seen.emplace(v, key);
        ASSERT_TRUE(fresh || it->second == key) << "unit " << u << " doors " << doors << " keys " << keys;
      }
  }
  EXPECT_GT(seen.size(), 100U);
}
