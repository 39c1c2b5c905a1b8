#pragma once

#include <filesystem>
#include <string>

#include "rbx/rbx.hpp"

namespace rbx::testing {

inline std::filesystem::path source_dir() { return RBX_SOURCE_DIR; }

inline std::string level_text(const std::string& name) {
  return read_text_file(source_dir() / "levels" / (name + ".lvl"));
}

inline PersiaLite load_bundled(const std::string& name) { return PersiaLite::load(level_text(name)); }

// Two 5x5 rooms with identical layouts joined by a plate door.
inline constexpr const char* kTwinRooms =
    "// name: twin\n"
    "#############\n"
    "#I....#.....#\n"
    "#.....#.....#\n"
    "#.....D.....#\n"
    "#.....#.....#\n"
    "#....P#.....#\n"
    "#############\n"
    "link: (5,5)->(3,6)\n";

// Small level exercising every tile kind: plate door, key, locked door, trap, exit.
inline constexpr const char* kAllTiles =
    "// name: all-tiles\n"
    "#########\n"
    "#I.P#K.X#\n"
    "#...D...#\n"
    "#.T.#...#\n"
    "######L##\n"
    "#.......#\n"
    "#########\n"
    "link: (1,3)->(2,4)\n";

}  // namespace rbx::testing
