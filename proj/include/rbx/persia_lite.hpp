#pragma once

// PersiaLite: a deterministic top-down tile world with traps, pressure plates,
// plate-linked doors, keys and key-locked doors. It stands in for a side-view
// platformer level: rooms joined by doors, irreversible hazards and long
// bottlenecked paths.
//
// Level text format, one character per tile:
//   '#' wall   '.' floor   'I' initial tile   'T' trap   'P' plate
//   'D' door (opened by a linked plate)   'K' key   'L' locked door (any held key)
//   'X' exit (walkable marker tile)
// After the grid, lines of the form "link: (r1,c1)->(r2,c2)" bind the plate at
// zero-based (r1,c1) to the door at (r2,c2). Lines starting with "//" are
// comments; "// name: <id>" names the level. Blank lines are ignored.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <queue>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rbx/errors.hpp"
#include "rbx/observation.hpp"
#include "rbx/pmdp.hpp"

namespace rbx {

struct GridPos {
  int row = 0;
  int col = 0;
  friend auto operator<=>(const GridPos&, const GridPos&) = default;
};

struct PlateLink {
  GridPos plate;
  GridPos door;
  friend bool operator==(const PlateLink&, const PlateLink&) = default;
};

struct LevelSpec {
  std::string name;
  std::vector<std::string> comments;  // full comment lines, "//" included
  std::vector<std::string> grid;
  std::vector<PlateLink> links;

  int rows() const { return static_cast<int>(grid.size()); }
  int cols() const { return grid.empty() ? 0 : static_cast<int>(grid.front().size()); }
  char tile(GridPos p) const { return grid[p.row][p.col]; }

  friend bool operator==(const LevelSpec&, const LevelSpec&) = default;
};

namespace tile {
inline constexpr char kWall = '#';
inline constexpr char kFloor = '.';
inline constexpr char kInit = 'I';
inline constexpr char kTrap = 'T';
inline constexpr char kPlate = 'P';
inline constexpr char kDoor = 'D';
inline constexpr char kKey = 'K';
inline constexpr char kLocked = 'L';
inline constexpr char kExit = 'X';

inline bool known(char c) { return std::string_view("#.ITPDKLX").find(c) != std::string_view::npos; }
inline bool is_door(char c) { return c == kDoor || c == kLocked; }
}  // namespace tile

namespace detail {

inline std::vector<std::pair<int, std::string>> split_lines(std::string_view text) {
  std::vector<std::pair<int, std::string>> lines;
  int number = 1;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) {
      if (start < text.size()) lines.emplace_back(number, std::string(text.substr(start)));
      break;
    }
    lines.emplace_back(number, std::string(text.substr(start, end - start)));
    start = end + 1;
    ++number;
  }
  return lines;
}

}  // namespace detail

// Parses the grid and link lines. Structural checks that need only the text
// (tile codes, rectangularity, exactly one 'I', link endpoints, door openers)
// happen here.
inline LevelSpec parse_level(std::string_view text) {
  static const std::regex link_re(R"(^link: \((\d+),(\d+)\)->\((\d+),(\d+)\)$)");
  LevelSpec spec;
  std::vector<int> grid_line_numbers;
  std::vector<int> link_line_numbers;
  std::vector<int> link_door_columns;

  for (const auto& [number, line] : detail::split_lines(text)) {
    if (line.empty()) continue;
    if (line.rfind("//", 0) == 0) {
      spec.comments.push_back(line);
      constexpr std::string_view name_tag = "// name: ";
      if (line.rfind(name_tag, 0) == 0) spec.name = line.substr(name_tag.size());
      continue;
    }
    if (line.rfind("link:", 0) == 0) {
      if (spec.grid.empty()) throw ParseError(number, 1, "link line before the grid");
      std::smatch m;
      if (!std::regex_match(line, m, link_re))
        throw ParseError(number, 1, "malformed link, expected \"link: (r1,c1)->(r2,c2)\"");
      PlateLink link{{std::stoi(m[1]), std::stoi(m[2])}, {std::stoi(m[3]), std::stoi(m[4])}};
      spec.links.push_back(link);
      link_line_numbers.push_back(number);
      link_door_columns.push_back(static_cast<int>(line.find("->")) + 3);
      continue;
    }
    if (!spec.links.empty()) throw ParseError(number, 1, "grid row after link lines");
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (!tile::known(line[c]))
        throw ParseError(number, static_cast<int>(c) + 1,
                         std::string("unknown tile code '") + line[c] + "'");
    }
    if (!spec.grid.empty() && line.size() != spec.grid.front().size()) {
      const int col = static_cast<int>(std::min(line.size(), spec.grid.front().size())) + 1;
      throw ParseError(number, col, "grid is not rectangular");
    }
    spec.grid.push_back(line);
    grid_line_numbers.push_back(number);
  }

  if (spec.grid.empty()) throw ParseError(1, 1, "level has no grid");

  std::vector<GridPos> inits;
  for (int r = 0; r < spec.rows(); ++r)
    for (int c = 0; c < spec.cols(); ++c)
      if (spec.grid[r][c] == tile::kInit) {
        if (!inits.empty())
          throw ParseError(grid_line_numbers[r], c + 1, "multiple 'I' tiles");
        inits.push_back({r, c});
      }
  if (inits.empty()) throw ParseError(grid_line_numbers.front(), 1, "no 'I' tile");

  auto in_grid = [&](GridPos p) {
    return p.row >= 0 && p.row < spec.rows() && p.col >= 0 && p.col < spec.cols();
  };
  for (std::size_t i = 0; i < spec.links.size(); ++i) {
    const auto& link = spec.links[i];
    const int line = link_line_numbers[i];
    if (!in_grid(link.plate) || spec.tile(link.plate) != tile::kPlate)
      throw ParseError(line, 7, "link source is not a plate tile");
    if (!in_grid(link.door) || spec.tile(link.door) != tile::kDoor)
      throw ParseError(line, link_door_columns[i], "dangling link: target is not a door tile");
  }

  bool has_key = false;
  for (const auto& row : spec.grid) has_key |= row.find(tile::kKey) != std::string::npos;
  for (int r = 0; r < spec.rows(); ++r)
    for (int c = 0; c < spec.cols(); ++c) {
      const char t = spec.grid[r][c];
      if (t == tile::kDoor) {
        const bool linked = std::any_of(spec.links.begin(), spec.links.end(), [&](const auto& l) {
          return l.door == GridPos{r, c};
        });
        if (!linked) throw ParseError(grid_line_numbers[r], c + 1, "door has no linked plate");
      } else if (t == tile::kLocked && !has_key) {
        throw ParseError(grid_line_numbers[r], c + 1, "locked door but the level has no key");
      }
    }
  return spec;
}

// Canonical text: comments, grid rows, then links. Canonical files round-trip byte-exactly.
inline std::string serialize_level(const LevelSpec& spec) {
  std::string out;
  for (const auto& c : spec.comments) out += c + "\n";
  for (const auto& row : spec.grid) out += row + "\n";
  for (const auto& l : spec.links) {
    out += "link: (" + std::to_string(l.plate.row) + "," + std::to_string(l.plate.col) + ")->(" +
           std::to_string(l.door.row) + "," + std::to_string(l.door.col) + ")\n";
  }
  return out;
}

struct ObsShape {
  int rows = 24;
  int cols = 24;
};

// Full environment state. Doors index both 'D' and 'L' tiles in row-major order;
// plates and keys are likewise indexed in row-major order.
struct EnvState {
  int row = 0;
  int col = 0;
  Action facing = Action::Right;
  std::uint64_t doors_open = 0;
  std::uint64_t plates_pressed = 0;
  std::uint64_t keys_held = 0;
  bool alive = true;
  std::uint64_t step_count = 0;

  friend bool operator==(const EnvState&, const EnvState&) = default;
};

inline constexpr std::uint32_t kPersiaSnapshotVersion = 1;

// Immutable compiled form of a level: index tables, room partition and
// render constants. Shared by every environment instance of the level.
class Level {
 public:
  static constexpr int kMaxEntities = 64;

  Level(LevelSpec spec, ObsShape shape = {}) : spec_(std::move(spec)), shape_(shape) {
    if (shape_.rows < 3 || shape_.cols < 3) throw ContractViolation("observation shape too small");
    const int n = rows() * cols();
    unit_.assign(n, -1);
    door_.assign(n, -1);
    plate_.assign(n, -1);
    key_.assign(n, -1);
    for (int r = 0; r < rows(); ++r)
      for (int c = 0; c < cols(); ++c) {
        const char t = spec_.grid[r][c];
        const int i = index({r, c});
        if (t != tile::kWall) {
          unit_[i] = static_cast<int>(unit_tiles_.size());
          unit_tiles_.push_back({r, c});
        }
        if (tile::is_door(t)) door_[i] = static_cast<int>(doors_.size()), doors_.push_back({r, c});
        if (t == tile::kPlate) plate_[i] = static_cast<int>(plates_.size()), plates_.push_back({r, c});
        if (t == tile::kKey) key_[i] = static_cast<int>(keys_.size()), keys_.push_back({r, c});
        if (t == tile::kInit) init_ = {r, c};
      }
    if (doors_.size() > kMaxEntities || plates_.size() > kMaxEntities || keys_.size() > kMaxEntities)
      throw ParseError(1, 1, "more than 64 doors, plates or keys");
    if (static_cast<int>(doors_.size() + keys_.size() + plates_.size()) > shape_.cols)
      throw ParseError(1, 1, "door/key/plate count exceeds the observation status row");
    plate_links_.assign(plates_.size(), 0);
    for (const auto& l : spec_.links)
      plate_links_[plate_[index(l.plate)]] |= std::uint64_t{1} << door_[index(l.door)];
    build_rooms();
    fingerprint_ = 1469598103934665603ULL;
    const std::string text = serialize_level(spec_);
    for (unsigned char ch : text) fingerprint_ = (fingerprint_ ^ ch) * 1099511628211ULL;
  }

  const LevelSpec& spec() const { return spec_; }
  ObsShape obs_shape() const { return shape_; }
  int rows() const { return spec_.rows(); }
  int cols() const { return spec_.cols(); }
  int index(GridPos p) const { return p.row * cols() + p.col; }
  bool in_grid(GridPos p) const { return p.row >= 0 && p.row < rows() && p.col >= 0 && p.col < cols(); }
  char tile(GridPos p) const { return in_grid(p) ? spec_.tile(p) : tile::kWall; }
  GridPos init() const { return init_; }

  // Every non-wall tile is a unit; ids are dense in row-major order.
  std::size_t unit_count() const { return unit_tiles_.size(); }
  UnitId unit_at(GridPos p) const {
    const int u = in_grid(p) ? unit_[index(p)] : -1;
    if (u < 0) throw ContractViolation("no unit at a wall tile");
    return static_cast<UnitId>(u);
  }
  GridPos unit_position(UnitId u) const { return unit_tiles_.at(u); }

  int door_at(GridPos p) const { return in_grid(p) ? door_[index(p)] : -1; }
  int plate_at(GridPos p) const { return in_grid(p) ? plate_[index(p)] : -1; }
  int key_at(GridPos p) const { return in_grid(p) ? key_[index(p)] : -1; }
  std::size_t door_count() const { return doors_.size(); }
  std::size_t plate_count() const { return plates_.size(); }
  std::size_t key_count() const { return keys_.size(); }
  std::uint64_t doors_opened_by(int plate) const { return plate_links_[plate]; }

  int room_at(GridPos p) const { return room_[index(p)]; }
  int room_count() const { return static_cast<int>(room_bounds_.size()); }
  // Per-room intensity offset in [0, 0.1) so look-alike rooms render differently.
  double room_offset(int room) const {
    const double x = room * 0.6180339887498949;
    return 0.1 * (x - std::floor(x));
  }

  std::uint64_t fingerprint() const { return fingerprint_; }

  // First tile of the room's bounding box including a one-tile wall margin.
  GridPos room_origin(int room) const { return room_bounds_[room].first; }

 private:
  void build_rooms() {
    const int n = rows() * cols();
    room_.assign(n, -1);
    int next_room = 0;
    // Rooms are 4-connected components of walkable non-door tiles.
    for (int r = 0; r < rows(); ++r)
      for (int c = 0; c < cols(); ++c) {
        const char t = spec_.grid[r][c];
        if (t == tile::kWall || tile::is_door(t) || room_[index({r, c})] >= 0) continue;
        std::queue<GridPos> q;
        q.push({r, c});
        room_[index({r, c})] = next_room;
        while (!q.empty()) {
          const GridPos p = q.front();
          q.pop();
          for (GridPos d : {GridPos{-1, 0}, GridPos{1, 0}, GridPos{0, -1}, GridPos{0, 1}}) {
            const GridPos nb{p.row + d.row, p.col + d.col};
            if (!in_grid(nb)) continue;
            const char nt = tile(nb);
            if (nt == tile::kWall || tile::is_door(nt) || room_[index(nb)] >= 0) continue;
            room_[index(nb)] = next_room;
            q.push(nb);
          }
        }
        ++next_room;
      }
    // A door tile joins the adjacent room with the smallest index.
    for (const GridPos d : doors_) {
      int best = -1;
      for (GridPos o : {GridPos{-1, 0}, GridPos{1, 0}, GridPos{0, -1}, GridPos{0, 1}}) {
        const GridPos nb{d.row + o.row, d.col + o.col};
        if (!in_grid(nb)) continue;
        const int rm = room_[index(nb)];
        if (rm >= 0 && !tile::is_door(tile(nb)) && (best < 0 || rm < best)) best = rm;
      }
      room_[index(d)] = best >= 0 ? best : next_room++;
    }
    room_bounds_.assign(next_room, {GridPos{rows(), cols()}, GridPos{-1, -1}});
    std::vector<GridPos> first_tile(next_room, GridPos{-1, -1});
    for (int r = 0; r < rows(); ++r)
      for (int c = 0; c < cols(); ++c) {
        const int rm = room_[index({r, c})];
        if (rm < 0) continue;
        auto& [lo, hi] = room_bounds_[rm];
        lo.row = std::min(lo.row, r - 1);
        lo.col = std::min(lo.col, c - 1);
        hi.row = std::max(hi.row, r + 1);
        hi.col = std::max(hi.col, c + 1);
        if (first_tile[rm].row < 0) first_tile[rm] = {r, c};
      }
    for (int rm = 0; rm < next_room; ++rm) {
      const auto& [lo, hi] = room_bounds_[rm];
      if (hi.row - lo.row + 1 > shape_.rows - 1 || hi.col - lo.col + 1 > shape_.cols)
        throw ParseError(first_tile[rm].row + 1, first_tile[rm].col + 1,
                         "room " + std::to_string(rm) + " does not fit the observation window");
    }
  }

  LevelSpec spec_;
  ObsShape shape_;
  GridPos init_;
  std::vector<int> unit_, door_, plate_, key_, room_;
  std::vector<GridPos> unit_tiles_, doors_, plates_, keys_;
  std::vector<std::uint64_t> plate_links_;
  std::vector<std::pair<GridPos, GridPos>> room_bounds_;
  std::uint64_t fingerprint_ = 0;
};

namespace detail {

inline GridPos offset(GridPos p, Action dir, int distance = 1) {
  switch (dir) {
    case Action::Left: return {p.row, p.col - distance};
    case Action::Right: return {p.row, p.col + distance};
    case Action::Up: return {p.row - distance, p.col};
    case Action::Down: return {p.row + distance, p.col};
    default: return p;
  }
}

// Whether the agent may enter `p` in state `s`. Locked doors accept any held key.
inline bool passable(const Level& level, const EnvState& s, GridPos p) {
  const char t = level.tile(p);
  if (t == tile::kWall) return false;
  if (tile::is_door(t)) {
    const bool open = (s.doors_open >> level.door_at(p)) & 1U;
    if (open) return true;
    return t == tile::kLocked && s.keys_held != 0;
  }
  return true;
}

inline void enter(const Level& level, EnvState& s, GridPos p) {
  s.row = p.row;
  s.col = p.col;
  const char t = level.tile(p);
  if (t == tile::kTrap) {
    s.alive = false;
  } else if (t == tile::kPlate) {
    const int plate = level.plate_at(p);
    s.plates_pressed |= std::uint64_t{1} << plate;
    s.doors_open |= level.doors_opened_by(plate);
  } else if (t == tile::kKey) {
    s.keys_held |= std::uint64_t{1} << level.key_at(p);
  } else if (t == tile::kLocked) {
    s.doors_open |= std::uint64_t{1} << level.door_at(p);
  }
}

}  // namespace detail

// One deterministic transition. Movement turns the agent to face the direction
// even when blocked. 'A' jumps two tiles in the facing direction over anything
// that is not a wall or a closed door; only the landing tile takes effect.
// 'B' and no-op leave the position unchanged.
inline EnvState transition(const Level& level, EnvState s, Action a) {
  if (!s.alive) throw ContractViolation("step on a terminated episode");
  ++s.step_count;
  const GridPos here{s.row, s.col};
  switch (a) {
    case Action::Left:
    case Action::Right:
    case Action::Up:
    case Action::Down: {
      s.facing = a;
      const GridPos target = detail::offset(here, a);
      if (detail::passable(level, s, target)) detail::enter(level, s, target);
      break;
    }
    case Action::A: {
      const GridPos mid = detail::offset(here, s.facing, 1);
      const GridPos land = detail::offset(here, s.facing, 2);
      if (detail::passable(level, s, mid) && detail::passable(level, s, land))
        detail::enter(level, s, land);
      break;
    }
    case Action::Noop:
    case Action::B:
      break;
  }
  return s;
}

inline EnvState initial_state(const Level& level) {
  EnvState s;
  s.row = level.init().row;
  s.col = level.init().col;
  return s;
}

// Deterministic rendering of the agent's current room into the observation
// window, plus a status row of door/key/plate bits along the bottom edge.
inline Observation render(const Level& level, const EnvState& s) {
  const ObsShape shape = level.obs_shape();
  std::vector<float> v(static_cast<std::size_t>(shape.rows) * shape.cols, 0.0f);
  const GridPos here{s.row, s.col};
  const int room = level.room_at(here);
  const GridPos origin = level.room_origin(room);
  const double off = level.room_offset(room);
  for (int vr = 0; vr < shape.rows - 1; ++vr)
    for (int vc = 0; vc < shape.cols; ++vc) {
      const GridPos p{origin.row + vr, origin.col + vc};
      if (!level.in_grid(p) || level.room_at(p) != room) continue;
      double base = 0.0;
      switch (level.tile(p)) {
        case tile::kWall: continue;
        case tile::kFloor:
        case tile::kInit: base = 0.20; break;
        case tile::kTrap: base = 0.10; break;
        case tile::kPlate: base = ((s.plates_pressed >> level.plate_at(p)) & 1U) ? 0.46 : 0.40; break;
        case tile::kDoor: base = ((s.doors_open >> level.door_at(p)) & 1U) ? 0.28 : 0.60; break;
        case tile::kLocked: base = ((s.doors_open >> level.door_at(p)) & 1U) ? 0.32 : 0.70; break;
        case tile::kKey: base = ((s.keys_held >> level.key_at(p)) & 1U) ? 0.20 : 0.80; break;
        case tile::kExit: base = 0.88; break;
      }
      v[static_cast<std::size_t>(vr) * shape.cols + vc] = static_cast<float>(base + off);
    }
  v[static_cast<std::size_t>(s.row - origin.row) * shape.cols + (s.col - origin.col)] = 1.0f;

  float* status = v.data() + static_cast<std::size_t>(shape.rows - 1) * shape.cols;
  int k = 0;
  auto put = [&](std::uint64_t bits, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) status[k++] = ((bits >> i) & 1U) ? 0.9f : 0.1f;
  };
  put(s.doors_open, level.door_count());
  put(s.keys_held, level.key_count());
  put(s.plates_pressed, level.plate_count());
  return Observation(shape.rows, shape.cols, std::move(v));
}

namespace detail {

template <class T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <class T>
T get_le(const std::uint8_t* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
  return v;
}

inline constexpr std::size_t kSnapshotSize = 8 + 2 + 2 + 1 + 1 + 8 * 4;

}  // namespace detail

inline Snapshot encode_state(const Level& level, const EnvState& s) {
  Snapshot snap;
  snap.version = kPersiaSnapshotVersion;
  snap.bytes.reserve(detail::kSnapshotSize);
  detail::put_le<std::uint64_t>(snap.bytes, level.fingerprint());
  detail::put_le<std::uint16_t>(snap.bytes, static_cast<std::uint16_t>(s.row));
  detail::put_le<std::uint16_t>(snap.bytes, static_cast<std::uint16_t>(s.col));
  detail::put_le<std::uint8_t>(snap.bytes, static_cast<std::uint8_t>(s.facing));
  detail::put_le<std::uint8_t>(snap.bytes, s.alive ? 1 : 0);
  detail::put_le<std::uint64_t>(snap.bytes, s.doors_open);
  detail::put_le<std::uint64_t>(snap.bytes, s.plates_pressed);
  detail::put_le<std::uint64_t>(snap.bytes, s.keys_held);
  detail::put_le<std::uint64_t>(snap.bytes, s.step_count);
  return snap;
}

inline EnvState decode_state(const Level& level, const Snapshot& snap) {
  if (snap.version != kPersiaSnapshotVersion)
    throw DecodeError("snapshot version " + std::to_string(snap.version) + " != " +
                      std::to_string(kPersiaSnapshotVersion));
  if (snap.bytes.size() != detail::kSnapshotSize) throw DecodeError("snapshot has wrong length");
  const std::uint8_t* p = snap.bytes.data();
  if (detail::get_le<std::uint64_t>(p) != level.fingerprint())
    throw DecodeError("snapshot belongs to a different level");
  EnvState s;
  s.row = detail::get_le<std::uint16_t>(p + 8);
  s.col = detail::get_le<std::uint16_t>(p + 10);
  const std::uint8_t facing = p[12];
  const std::uint8_t alive = p[13];
  s.doors_open = detail::get_le<std::uint64_t>(p + 14);
  s.plates_pressed = detail::get_le<std::uint64_t>(p + 22);
  s.keys_held = detail::get_le<std::uint64_t>(p + 30);
  s.step_count = detail::get_le<std::uint64_t>(p + 38);

  auto mask = [](std::size_t n) { return n >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << n) - 1; };
  const GridPos here{s.row, s.col};
  if (!level.in_grid(here) || level.tile(here) == tile::kWall)
    throw DecodeError("snapshot places the agent off the walkable grid");
  if (facing < static_cast<std::uint8_t>(Action::Left) || facing > static_cast<std::uint8_t>(Action::Down))
    throw DecodeError("snapshot has invalid facing");
  if (alive > 1) throw DecodeError("snapshot has invalid alive flag");
  s.facing = static_cast<Action>(facing);
  s.alive = alive == 1;
  if ((s.doors_open & ~mask(level.door_count())) || (s.plates_pressed & ~mask(level.plate_count())) ||
      (s.keys_held & ~mask(level.key_count())))
    throw DecodeError("snapshot has out-of-range entity bits");
  const char t = level.tile(here);
  if (s.alive == (t == tile::kTrap)) throw DecodeError("snapshot alive flag contradicts its tile");
  if (tile::is_door(t) && !((s.doors_open >> level.door_at(here)) & 1U))
    throw DecodeError("snapshot places the agent inside a closed door");
  return s;
}

// Persistent-MDP environment over a compiled level. Cheap to copy; copies share
// the immutable Level.
class PersiaLite {
 public:
  explicit PersiaLite(std::shared_ptr<const Level> level)
      : level_(std::move(level)), state_(initial_state(*level_)) {}

  static PersiaLite load(std::string_view text, ObsShape shape = {}) {
    return PersiaLite(std::make_shared<const Level>(parse_level(text), shape));
  }

  StepResult reset() {
    state_ = initial_state(*level_);
    return {observe(), false, 1};
  }

  StepResult step(Action a) {
    if (!state_.alive) throw ContractViolation("step on a terminated episode; reset or restore first");
    state_ = transition(*level_, state_, a);
    ++lifetime_steps_;
    return {observe(), !state_.alive, 1};
  }

  Snapshot save_snapshot() const { return encode_state(*level_, state_); }

  StepResult restore_snapshot(const Snapshot& snap) {
    state_ = decode_state(*level_, snap);
    return {observe(), !state_.alive, 1};
  }

  Observation observe() const { return render(*level_, state_); }
  bool terminated() const { return !state_.alive; }

  UnitId unit_of() const {
    if (!state_.alive) throw ContractViolation("unit_of on a dead state");
    return level_->unit_at({state_.row, state_.col});
  }

  UnitId unit_of_snapshot(const Snapshot& snap) const {
    const EnvState s = decode_state(*level_, snap);
    if (!s.alive) throw ContractViolation("unit_of on a dead state");
    return level_->unit_at({s.row, s.col});
  }

  // Steps taken by this instance since construction; not part of the snapshot.
  std::uint64_t lifetime_steps() const { return lifetime_steps_; }

  const EnvState& state() const { return state_; }
  const Level& level() const { return *level_; }
  const std::shared_ptr<const Level>& level_ptr() const { return level_; }

 private:
  std::shared_ptr<const Level> level_;
  EnvState state_;
  std::uint64_t lifetime_steps_ = 0;
};

static_assert(UnitAccounting<PersiaLite>);

inline constexpr std::size_t kDefaultReachabilityCap = 10'000'000;

// Units visited by any live state reachable from s_init. Breadth-first over the
// full (position, facing, door, plate, key) state graph; death states are not
// expanded and contribute no unit.
inline std::set<UnitId> reachable_units(const Level& level,
                                        std::size_t state_cap = kDefaultReachabilityCap) {
  struct Key {
    std::uint32_t pos_facing;
    std::uint64_t doors, plates, keys;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      std::uint64_t h = k.pos_facing * 0x9e3779b97f4a7c15ULL;
      h ^= k.doors + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      h ^= k.plates + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      h ^= k.keys + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      return static_cast<std::size_t>(h);
    }
  };
  auto key_of = [&](const EnvState& s) {
    return Key{static_cast<std::uint32_t>(level.index({s.row, s.col}) * 8 + static_cast<int>(s.facing)),
               s.doors_open, s.plates_pressed, s.keys_held};
  };

  std::set<UnitId> units;
  std::unordered_set<Key, KeyHash> seen;
  std::queue<EnvState> frontier;
  const EnvState start = initial_state(level);
  seen.insert(key_of(start));
  frontier.push(start);
  while (!frontier.empty()) {
    const EnvState s = frontier.front();
    frontier.pop();
    units.insert(level.unit_at({s.row, s.col}));
    for (int a = 0; a < kActionCount; ++a) {
      EnvState next = transition(level, s, static_cast<Action>(a));
      if (!next.alive) continue;
      next.step_count = 0;
      if (seen.insert(key_of(next)).second) {
        if (seen.size() > state_cap)
          throw OracleError("reachability search exceeded " + std::to_string(state_cap) + " states");
        frontier.push(next);
      }
    }
  }
  return units;
}

}  // namespace rbx
