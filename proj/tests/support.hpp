#pragma once

#include <gtest/gtest.h>

#include <string>

#include "reflect/harness.hpp"

namespace reflect::test {

inline Scenario scenario(const std::string& body) { return Scenario::parse(body); }

/// Open w x h grid, agent at `start`, nothing else.
inline std::string open_grid(int w, int h, Coord start) {
  std::string g = "[scenario]\nname = open\nepisode_steps = 100\n[grid]\n";
  for (int y = h - 1; y >= 0; --y) {
    for (int x = 0; x < w; ++x) g += (Coord{x, y} == start) ? 'A' : '.';
    g += '\n';
  }
  return g;
}

inline std::shared_ptr<const GridSpec> grid_of(const std::string& body) { return scenario(body).grid; }

inline ModelSnapshot snapshot_with(std::vector<NormSpec> norms) {
  ModelStore store;
  for (auto& n : norms) store.mutable_norms().add(n);
  store.mutable_goals().set("task_reward", 1.0, GoalSource::Design, 0);
  store.mutable_goals().set("harm_to_other", 1.0, GoalSource::Design, 0);
  return *store.snapshot();
}

/// Steps `plan` from `s` in the real world and records each transition.
/// Stops at a terminal state.
inline std::vector<Observation> observe_plan(const World& w, WorldState& s, const std::vector<Action>& plan,
                                             long& tick) {
  std::vector<Observation> out;
  for (Action a : plan) {
    if (s.terminal) break;
    auto [next, p] = w.step(s, a);
    out.push_back({s.episode, tick++, Transition{s, a, next, p.npc_moves}, p.events});
    s = next;
  }
  return out;
}

/// Transition table observed on every reachable (state, action) pair.
inline TransitionModel full_model(const World& w) {
  TransitionModel m;
  std::map<StateKey, WorldState> states;
  std::vector<WorldState> frontier{w.initial_state()};
  states[w.key(frontier[0])] = frontier[0];
  while (!frontier.empty()) {
    WorldState s = frontier.back();
    frontier.pop_back();
    for (Action a : kActions) {
      WorldState from = s;
      from.step = 0;
      auto next = w.step(from, a).first;
      m.record(w.key(from), a, w.key(next), next.terminal);
      if (next.terminal || states.contains(w.key(next))) continue;
      states[w.key(next)] = next;
      frontier.push_back(next);
    }
  }
  return m;
}

/// Engine plus the sink and tracer it writes to.
struct Rig {
  MemorySink sink;
  Tracer tracer;
  Engine engine;

  Rig(const Scenario& sc, const EngineConfig& cfg)
      : tracer(sink, cfg.seed, TierConfig::for_tier(cfg.tier)), engine(sc.grid, cfg, tracer) {}
  Rig(const Scenario& sc, int tier, std::uint64_t seed, const std::string& control = {})
      : Rig(sc, sc.engine_for(tier, seed, parse_control(control))) {}
};

inline std::string scenario_path(const std::string& name) {
  return std::string(REFLECT_SOURCE_DIR) + "/scenarios/" + name + ".scn";
}

}  // namespace reflect::test
