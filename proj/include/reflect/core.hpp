#pragma once

// Shared vocabulary: coordinates, actions, cell types, state keys and the
// error hierarchy used across the library.

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace reflect {

struct Coord {
  int x = 0;
  int y = 0;
  auto operator<=>(const Coord&) const = default;
};

inline constexpr Coord kRemoved{-1, -1};

inline int chebyshev(Coord a, Coord b) {
  const int dx = a.x > b.x ? a.x - b.x : b.x - a.x;
  const int dy = a.y > b.y ? a.y - b.y : b.y - a.y;
  return dx > dy ? dx : dy;
}

// Declaration order is the global tie-break order.
enum class Action : std::uint8_t { North, South, East, West, Wait };

inline constexpr std::array<Action, 5> kActions{Action::North, Action::South, Action::East,
                                               Action::West, Action::Wait};
inline constexpr std::size_t kActionCount = kActions.size();

inline constexpr std::size_t index_of(Action a) { return static_cast<std::size_t>(a); }

inline constexpr Coord displacement(Action a) {
  switch (a) {
    case Action::North: return {0, 1};
    case Action::South: return {0, -1};
    case Action::East: return {1, 0};
    case Action::West: return {-1, 0};
    case Action::Wait: return {0, 0};
  }
  return {0, 0};
}

inline Coord operator+(Coord c, Coord d) { return {c.x + d.x, c.y + d.y}; }

std::string_view to_string(Action a);
std::optional<Action> parse_action(std::string_view s);

enum class CellType : std::uint8_t { Empty, Wall, Reward, Hazard, Sign, Exit };

std::string_view to_string(CellType t);
std::optional<CellType> parse_cell_type(std::string_view s);

/// Canonical, Markov identity of a world configuration as seen by the agent:
/// agent position, every NPC position (kRemoved once gone) and the bitmask of
/// consumed reward cells (bit i = i-th reward cell in row-major order).
struct StateKey {
  Coord agent;
  std::vector<Coord> npcs;
  std::uint64_t consumed = 0;

  auto operator<=>(const StateKey&) const = default;
  bool operator==(const StateKey&) const = default;

  std::string str() const;
  static StateKey parse(std::string_view s);
};

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define REFLECT_ERROR(Name)            \
  struct Name : Error {                \
    using Error::Error;                \
  }

REFLECT_ERROR(InvalidState);
REFLECT_ERROR(ModelConflict);
REFLECT_ERROR(OutOfOrder);
REFLECT_ERROR(UnknownGoalId);
REFLECT_ERROR(UnknownGoalSchema);
REFLECT_ERROR(EmptyPlan);
REFLECT_ERROR(EmptyModel);
REFLECT_ERROR(InsufficientHistory);
REFLECT_ERROR(UnknownStrategy);
REFLECT_ERROR(MembersDisabled);
REFLECT_ERROR(ConfigError);
REFLECT_ERROR(SchemaMismatch);

#undef REFLECT_ERROR

/// 64-bit FNV-1a. Used for content digests that must be stable across builds.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v);

}  // namespace reflect
