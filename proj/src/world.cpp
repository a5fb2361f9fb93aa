#include "reflect/world.hpp"

#include <cmath>

namespace reflect {

std::string_view to_string(EndReason r) {
  switch (r) {
    case EndReason::Hazard: return "hazard";
    case EndReason::Exit: return "exit";
    case EndReason::TimeLimit: return "time_limit";
  }
  return "?";
}

bool GridSpec::in_zone(const std::string& zone, Coord c) const {
  auto it = zones.find(zone);
  return it != zones.end() && it->second.contains(c);
}

int GridSpec::reward_index(Coord c) const {
  for (std::size_t i = 0; i < reward_cells_.size(); ++i) {
    if (reward_cells_[i] == c) return static_cast<int>(i);
  }
  return -1;
}

const GroundNorm* GridSpec::find_norm(const std::string& id) const {
  for (const auto& n : norms) {
    if (n.spec.id == id) return &n;
  }
  return nullptr;
}

void GridSpec::finalize() {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (width <= 0 || height <= 0) fail("grid dimensions must be positive");
  if (cells.size() != static_cast<std::size_t>(width * height)) fail("cell count does not match dimensions");
  if (episode_limit <= 0) fail("episode limit must be positive");

  reward_cells_.clear();
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Cell& c = at({x, y});
      if (!std::isfinite(c.value) || c.value < 0.0) fail("reward and hazard values must be finite and nonnegative");
      if (c.type == CellType::Reward) reward_cells_.push_back({x, y});
    }
  }
  if (reward_cells_.size() > 64) fail("at most 64 reward cells are supported");

  if (!in_bounds(agent_start) || at(agent_start).type == CellType::Wall) fail("agent start must be a non-wall cell");
  for (const auto& [id, cellset] : zones) {
    for (Coord c : cellset) {
      if (!in_bounds(c)) fail("zone " + id + " has a cell outside the grid");
    }
  }

  std::set<std::string> ids;
  for (const auto& n : norms) {
    n.spec.validate();
    if (!ids.insert(n.spec.id).second) fail("duplicate norm id " + n.spec.id);
    if (n.spec.predicate.tmpl == Template::AgentInZone && !zones.contains(n.spec.predicate.zone)) {
      fail("norm " + n.spec.id + " references unknown zone " + n.spec.predicate.zone);
    }
  }

  std::set<std::string> npc_ids;
  for (const auto& npc : npcs) {
    if (!npc_ids.insert(npc.id).second) fail("duplicate npc id " + npc.id);
    if (npc.path.empty()) fail("npc " + npc.id + " has no path");
    std::set<Coord> seen;
    for (std::size_t i = 0; i < npc.path.size(); ++i) {
      const Coord c = npc.path[i];
      if (!in_bounds(c) || at(c).type == CellType::Wall) fail("npc " + npc.id + " path crosses a wall or leaves the grid");
      if (!seen.insert(c).second) fail("npc " + npc.id + " path revisits a cell");
      if (i > 0) {
        const Coord p = npc.path[i - 1];
        if (std::abs(p.x - c.x) + std::abs(p.y - c.y) != 1) fail("npc " + npc.id + " waypoints are not 4-connected");
      }
      if (i + 1 < npc.path.size() && at(c).type == CellType::Hazard) {
        fail("npc " + npc.id + " path continues past a hazard");
      }
    }
    if (npc.path.front() == agent_start) fail("npc " + npc.id + " starts on the agent");
    if (npc.loop) {
      const Coord a = npc.path.back(), b = npc.path.front();
      if (npc.path.size() < 2 || std::abs(a.x - b.x) + std::abs(a.y - b.y) != 1) {
        fail("looping npc " + npc.id + " must return to its start in one step");
      }
    }
  }

  for (const auto& s : signs) {
    if (!in_bounds(s.at)) fail("sign outside the grid");
    if (s.radius < 0) fail("sign radius must be nonnegative");
    if (!find_norm(s.norm_id)) fail("sign announces unknown norm " + s.norm_id);
  }
}

bool holds(const Predicate& p, const GridSpec& grid, const Transition& t) {
  switch (p.tmpl) {
    case Template::AgentInZone: return grid.in_zone(p.zone, t.next.agent);
    case Template::AgentEntersCellKind:
      return t.next.agent != t.prev.agent && grid.type_at(t.next.agent) == p.kind;
    case Template::OtherEntersCellKind: return other_entries(p.kind, grid, t) > 0;
    case Template::StepCountExceeds: return t.next.step > p.n;
    case Template::PreventOtherEntering: return false;
  }
  return false;
}

int other_entries(CellType kind, const GridSpec& grid, const Transition& t) {
  int n = 0;
  for (const auto& m : t.npc_moves) {
    if (!m.blocked && m.to != m.from && grid.type_at(m.to) == kind) ++n;
  }
  return n;
}

std::pair<WorldState, Percept> step_world(const GridSpec& grid, const WorldState& s, Action a) {
  if (s.terminal) throw InvalidState("cannot step a terminal state");
  WorldState next = s;
  next.step = s.step + 1;
  next.rng_cursor = s.rng_cursor + 1;

  Percept percept;
  std::optional<EndReason> end;

  auto npc_at = [&](Coord c) {
    for (Coord p : s.npc_pos) {
      if (p == c) return true;
    }
    return false;
  };

  const Coord target = s.agent + displacement(a);
  if (a != Action::Wait && grid.in_bounds(target) && grid.at(target).type != CellType::Wall && !npc_at(target)) {
    next.agent = target;
    const Cell& cell = grid.at(target);
    if (cell.type == CellType::Reward) {
      const int idx = grid.reward_index(target);
      const std::uint64_t bit = std::uint64_t{1} << idx;
      if (!(next.consumed & bit)) {
        next.consumed |= bit;
        percept.events.emplace_back(RewardCollected{target, cell.value});
      }
    } else if (cell.type == CellType::Hazard) {
      percept.events.emplace_back(HazardEntered{target, cell.value});
      end = EndReason::Hazard;
    } else if (cell.type == CellType::Exit) {
      end = EndReason::Exit;
    }
  }

  if (!end) {
    for (std::size_t i = 0; i < grid.npcs.size(); ++i) {
      const Coord from = s.npc_pos[i];
      if (from == kRemoved) continue;
      const auto& path = grid.npcs[i].path;
      const int cur = s.npc_cursor[i];
      int nxt = cur + 1;
      if (nxt >= static_cast<int>(path.size())) nxt = grid.npcs[i].loop ? 0 : cur;
      NpcMove move{i, from, from, false, false};
      if (nxt != cur) {
        const Coord to = path[static_cast<std::size_t>(nxt)];
        if (to == next.agent) {
          move.blocked = true;
        } else {
          move.to = to;
          next.npc_cursor[i] = nxt;
          next.npc_pos[i] = to;
          if (grid.at(to).type == CellType::Hazard) {
            move.removed = true;
            next.npc_pos[i] = kRemoved;
            percept.events.emplace_back(HarmEvent{grid.npcs[i].id, to});
          }
        }
      }
      percept.npc_moves.push_back(move);
    }
  }

  if (!end && next.step >= grid.episode_limit) end = EndReason::TimeLimit;
  next.terminal = end.has_value();

  const Transition t{s, a, next, percept.npc_moves};
  for (const auto& n : grid.norms) {
    if (n.spec.active && n.spec.kind == NormKind::Prohibition && holds(n.spec.predicate, grid, t)) {
      percept.events.emplace_back(SanctionEvent{n.spec.id, n.spec.severity});
    }
  }
  for (const auto& sign : grid.signs) {
    if (chebyshev(next.agent, sign.at) <= sign.radius) {
      NormSpec spec = grid.find_norm(sign.norm_id)->spec;
      spec.source = NormSource::Environment;
      percept.events.emplace_back(SignPerceived{spec, sign.at, sign.goal});
    }
  }
  if (end) percept.events.emplace_back(EpisodeEnded{*end});

  percept.state = next;
  percept.step = next.step;
  return {std::move(next), std::move(percept)};
}

World::World(std::shared_ptr<const GridSpec> grid) : grid_(std::move(grid)) {}

WorldState World::initial_state(int episode, std::uint64_t rng_cursor) const {
  WorldState s;
  s.agent = grid_->agent_start;
  for (const auto& npc : grid_->npcs) {
    s.npc_pos.push_back(npc.path.front());
    s.npc_cursor.push_back(0);
  }
  s.episode = episode;
  s.rng_cursor = rng_cursor;
  return s;
}

Percept World::observe(const WorldState& s) const {
  Percept p;
  p.state = s;
  p.step = s.step;
  for (const auto& sign : grid_->signs) {
    if (chebyshev(s.agent, sign.at) <= sign.radius) {
      NormSpec spec = grid_->find_norm(sign.norm_id)->spec;
      spec.source = NormSource::Environment;
      p.events.emplace_back(SignPerceived{spec, sign.at, sign.goal});
    }
  }
  return p;
}

std::pair<WorldState, Percept> World::step(const WorldState& s, Action a) const {
  validate(s);
  return step_world(*grid_, s, a);
}

WorldState World::next_episode(const WorldState& terminal) const {
  return initial_state(terminal.episode + 1, terminal.rng_cursor);
}

TwinHandle World::make_twin(const WorldState& s, const TwinConfig& cfg) const {
  return TwinHandle(grid_, s, cfg);
}

void World::validate(const WorldState& s) const {
  const GridSpec& g = *grid_;
  auto fail = [](const std::string& m) { throw InvalidState(m); };
  if (!g.in_bounds(s.agent) || g.at(s.agent).type == CellType::Wall) fail("agent on a wall or off-grid");
  if (s.npc_pos.size() != g.npcs.size() || s.npc_cursor.size() != g.npcs.size()) fail("npc count mismatch");
  for (std::size_t i = 0; i < g.npcs.size(); ++i) {
    if (s.npc_pos[i] == kRemoved) continue;
    const int c = s.npc_cursor[i];
    if (c < 0 || c >= static_cast<int>(g.npcs[i].path.size()) || g.npcs[i].path[static_cast<std::size_t>(c)] != s.npc_pos[i]) {
      fail("npc " + g.npcs[i].id + " off its script");
    }
  }
  const auto n = g.reward_cells().size();
  if (n < 64 && (s.consumed >> n) != 0) fail("consumed set names a non-reward cell");
  if (s.step < 0 || s.episode < 0) fail("negative step or episode");
}

StateKey World::key(const WorldState& s) const { return StateKey{s.agent, s.npc_pos, s.consumed}; }

TwinHandle::TwinHandle(std::shared_ptr<const GridSpec> grid, WorldState s, TwinConfig cfg)
    : grid_(std::move(grid)), state_(std::move(s)), cfg_(cfg) {
  if (cfg_.fidelity >= 1.0) return;  // a perfect twin never draws
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(state_.rng_cursor), static_cast<std::uint32_t>(state_.rng_cursor >> 32)};
  rng_.seed(seq);
}

std::pair<WorldState, Percept> TwinHandle::step(Action a) {
  if (cfg_.fidelity < 1.0) {
    const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    if (u < 1.0 - cfg_.fidelity) {
      a = Action::Wait;
      ++perturbations_;
    }
  }
  auto result = step_world(*grid_, state_, a);
  state_ = result.first;
  ++steps_;
  return result;
}

}  // namespace reflect
