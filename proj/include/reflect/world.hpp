#pragma once

// Deterministic gridworld: layout, ground-truth norms, signs, scripted NPCs,
// and the cloneable twin used by the consequence engine.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "reflect/core.hpp"
#include "reflect/norms.hpp"

namespace reflect {

struct Cell {
  CellType type = CellType::Empty;
  double value = 0.0;  // reward value or hazard penalty
};

/// How a ground-truth norm becomes known to the agent.
enum class Disclosure : std::uint8_t { Design, Sign, Hidden };

struct GroundNorm {
  NormSpec spec;
  Disclosure disclosure = Disclosure::Hidden;
};

struct GoalWeight {
  std::string goal_id;
  double weight = 0.0;
  bool operator==(const GoalWeight&) const = default;
};

struct SignSpec {
  Coord at;
  std::string norm_id;
  int radius = 0;  // Chebyshev
  std::optional<GoalWeight> goal;
};

/// FollowWaypoints: one 4-connected step along `path` per world step; waits
/// when the next cell holds the agent. Non-looping scripts park on the last
/// cell. path[0] is the start cell.
struct NpcScript {
  std::string id;
  std::vector<Coord> path;
  bool loop = false;
};

struct GridSpec {
  int width = 0;
  int height = 0;
  std::vector<Cell> cells;  // row-major, index y * width + x
  Coord agent_start;
  std::map<std::string, std::set<Coord>> zones;
  std::vector<NpcScript> npcs;
  std::vector<SignSpec> signs;
  std::vector<GroundNorm> norms;
  int episode_limit = 100;

  bool in_bounds(Coord c) const { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }
  const Cell& at(Coord c) const { return cells[static_cast<std::size_t>(c.y * width + c.x)]; }
  Cell& at(Coord c) { return cells[static_cast<std::size_t>(c.y * width + c.x)]; }
  CellType type_at(Coord c) const { return in_bounds(c) ? at(c).type : CellType::Wall; }
  bool in_zone(const std::string& zone, Coord c) const;

  /// Reward cells in row-major order; position i is bit i of StateKey::consumed.
  const std::vector<Coord>& reward_cells() const { return reward_cells_; }
  int reward_index(Coord c) const;

  const GroundNorm* find_norm(const std::string& id) const;

  /// Indexes reward cells and checks every layout invariant. Throws ConfigError.
  void finalize();

 private:
  std::vector<Coord> reward_cells_;
};

struct WorldState {
  Coord agent;
  std::vector<Coord> npc_pos;  // kRemoved once an NPC is gone
  std::vector<int> npc_cursor;
  std::uint64_t consumed = 0;
  int step = 0;
  int episode = 0;
  std::uint64_t rng_cursor = 0;
  bool terminal = false;

  bool operator==(const WorldState&) const = default;
};

struct RewardCollected {
  Coord at;
  double value = 0.0;
  bool operator==(const RewardCollected&) const = default;
};
struct HazardEntered {
  Coord at;
  double penalty = 0.0;
  bool operator==(const HazardEntered&) const = default;
};
struct SanctionEvent {
  std::string norm_id;
  double penalty = 0.0;
  bool operator==(const SanctionEvent&) const = default;
};
struct HarmEvent {
  std::string npc_id;
  Coord at;
  bool operator==(const HarmEvent&) const = default;
};
struct SignPerceived {
  NormSpec norm;
  Coord at;
  std::optional<GoalWeight> goal;
  bool operator==(const SignPerceived&) const = default;
};
enum class EndReason : std::uint8_t { Hazard, Exit, TimeLimit };
struct EpisodeEnded {
  EndReason reason = EndReason::TimeLimit;
  bool operator==(const EpisodeEnded&) const = default;
};

using StepEvent =
    std::variant<RewardCollected, HazardEntered, SanctionEvent, HarmEvent, SignPerceived, EpisodeEnded>;

std::string_view to_string(EndReason r);

struct NpcMove {
  std::size_t npc = 0;
  Coord from;
  Coord to;  // cell entered; equals `from` when the NPC did not move
  bool blocked = false;
  bool removed = false;
  bool operator==(const NpcMove&) const = default;
};

struct Percept {
  WorldState state;
  std::vector<StepEvent> events;
  std::vector<NpcMove> npc_moves;
  int step = 0;
  bool operator==(const Percept&) const = default;
};

/// One executed or simulated transition, the domain of prohibition predicates.
struct Transition {
  WorldState prev;
  Action action = Action::Wait;
  WorldState next;
  std::vector<NpcMove> npc_moves;
};

/// Prohibition predicates range over a single transition.
bool holds(const Predicate& p, const GridSpec& grid, const Transition& t);

/// Number of NPC entries into cells of `kind` during the transition; the
/// per-step contribution to a PreventOtherEntering obligation.
int other_entries(CellType kind, const GridSpec& grid, const Transition& t);

struct TwinConfig {
  double fidelity = 1.0;
  std::uint64_t seed = 0;
};

class World;

/// Isolated simulator value. With probability 1 - fidelity per simulated step
/// the action is replaced by Wait; at fidelity 1 it never draws and steps
/// exactly like World::step.
class TwinHandle {
 public:
  std::pair<WorldState, Percept> step(Action a);
  const WorldState& state() const { return state_; }
  int perturbations() const { return perturbations_; }
  int steps() const { return steps_; }

 private:
  friend class World;
  TwinHandle(std::shared_ptr<const GridSpec> grid, WorldState s, TwinConfig cfg);

  std::shared_ptr<const GridSpec> grid_;
  WorldState state_;
  TwinConfig cfg_;
  std::mt19937_64 rng_;
  int perturbations_ = 0;
  int steps_ = 0;
};

class World {
 public:
  explicit World(std::shared_ptr<const GridSpec> grid);

  const GridSpec& grid() const { return *grid_; }
  std::shared_ptr<const GridSpec> grid_ptr() const { return grid_; }

  WorldState initial_state(int episode = 0, std::uint64_t rng_cursor = 0) const;
  /// Percept for a fresh episode start (only SignPerceived events can occur).
  Percept observe(const WorldState& s) const;
  std::pair<WorldState, Percept> step(const WorldState& s, Action a) const;
  WorldState next_episode(const WorldState& terminal) const;
  TwinHandle make_twin(const WorldState& s, const TwinConfig& cfg) const;

  /// Throws InvalidState when `s` breaks a WorldState invariant.
  void validate(const WorldState& s) const;
  StateKey key(const WorldState& s) const;

 private:
  std::shared_ptr<const GridSpec> grid_;
};

/// Pure transition function shared by World and TwinHandle.
std::pair<WorldState, Percept> step_world(const GridSpec& grid, const WorldState& s, Action a);

}  // namespace reflect
