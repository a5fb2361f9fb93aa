#include "reflect/consequence.hpp"

#include <algorithm>

namespace reflect {

std::string_view to_string(Basis b) { return b == Basis::Twin ? "twin" : "learned"; }

std::string_view to_string(HypothesisStatus s) {
  switch (s) {
    case HypothesisStatus::Untested: return "untested";
    case HypothesisStatus::Supported: return "supported";
    case HypothesisStatus::Refuted: return "refuted";
  }
  return "?";
}

double Rollout::norm_cost() const {
  double c = obligation_cost;
  for (const auto& v : violations) c += v.severity;
  return c;
}

namespace {

// Rebuilds the transition implied by a learned successor key.
Transition predicted_transition(const GridSpec& grid, const WorldState& prev, Action a, const StateKey& next,
                                bool terminal, std::vector<StepEvent>& events) {
  Transition t;
  t.prev = prev;
  t.action = a;
  t.next = prev;
  t.next.agent = next.agent;
  t.next.npc_pos = next.npcs;
  t.next.consumed = next.consumed;
  t.next.step = prev.step + 1;
  t.next.rng_cursor = prev.rng_cursor + 1;
  t.next.terminal = terminal;

  if (next.agent != prev.agent) {
    const CellType type = grid.type_at(next.agent);
    if (type == CellType::Reward && (next.consumed & ~prev.consumed) != 0) {
      events.emplace_back(RewardCollected{next.agent, grid.at(next.agent).value});
    } else if (type == CellType::Hazard) {
      events.emplace_back(HazardEntered{next.agent, grid.at(next.agent).value});
    }
  }
  const std::size_t n = std::min(prev.npc_pos.size(), next.npcs.size());
  for (std::size_t i = 0; i < n; ++i) {
    const Coord from = prev.npc_pos[i];
    if (from == kRemoved) continue;
    NpcMove m{i, from, next.npcs[i], false, false};
    if (m.to == kRemoved) {
      // The key only says the NPC vanished; it can only have stepped onto an
      // adjacent hazard.
      m.removed = true;
      m.to = from;
      for (Action d : kActions) {
        const Coord c = from + displacement(d);
        if (c != from && grid.type_at(c) == CellType::Hazard) {
          m.to = c;
          break;
        }
      }
      const std::string id = i < grid.npcs.size() ? grid.npcs[i].id : std::to_string(i);
      events.emplace_back(HarmEvent{id, m.to});
    }
    t.npc_moves.push_back(m);
  }
  return t;
}

void evaluate_norms(const GridSpec& grid, const NormModel& norms, const Transition& t, int index,
                    PredictedStep& step, Rollout& r) {
  for (const auto& n : norms.norms()) {
    if (!n.active) continue;
    if (n.kind == NormKind::Prohibition) {
      if (holds(n.predicate, grid, t)) {
        Violation v{n.id, index, n.severity};
        step.violations.push_back(v);
        r.violations.push_back(v);
      }
    } else if (n.predicate.tmpl == Template::PreventOtherEntering && index <= n.predicate.horizon) {
      const int k = other_entries(n.predicate.kind, grid, t);
      r.obligation_entries += k;
      r.entries_by_obligation[n.id] += k;
      r.obligation_cost += k * n.severity;
    }
  }
}

void tally(const std::vector<StepEvent>& events, Rollout& r) {
  for (const auto& ev : events) {
    if (auto* rc = std::get_if<RewardCollected>(&ev)) r.rewards += rc->value;
    else if (auto* h = std::get_if<HazardEntered>(&ev)) r.hazard_penalty += h->penalty;
    else if (std::holds_alternative<HarmEvent>(ev)) ++r.harms;
  }
}

}  // namespace

Rollout rollout(const World& world, const ModelSnapshot& snap, const WorldState& s, std::span<const Action> plan,
                int horizon, Basis basis, const TwinConfig& twin) {
  if (plan.empty()) throw EmptyPlan("rollout needs at least one action");
  if (horizon < static_cast<int>(plan.size())) throw ConfigError("rollout horizon shorter than plan");
  const GridSpec& grid = world.grid();
  static const NormModel kNoNorms;
  const NormModel& norms = snap.norms ? *snap.norms : kNoNorms;

  Rollout r;
  r.plan.assign(plan.begin(), plan.end());
  r.plan.resize(static_cast<std::size_t>(horizon), Action::Wait);
  r.horizon = horizon;
  r.basis = basis;

  if (basis == Basis::Twin) {
    TwinHandle t = world.make_twin(s, twin);
    for (int i = 0; i < horizon && !t.state().terminal; ++i) {
      const WorldState prev = t.state();
      auto [next, percept] = t.step(r.plan[static_cast<std::size_t>(i)]);
      PredictedStep ps;
      ps.action = r.plan[static_cast<std::size_t>(i)];
      ps.state = next;
      for (auto& ev : percept.events) {
        if (!std::holds_alternative<SanctionEvent>(ev)) ps.events.push_back(std::move(ev));
      }
      const Transition tr{prev, ps.action, next, percept.npc_moves};
      evaluate_norms(grid, norms, tr, i + 1, ps, r);
      tally(ps.events, r);
      r.trajectory.push_back(std::move(ps));
    }
    return r;
  }

  static const TransitionModel kEmpty;
  const TransitionModel& model = snap.transitions ? *snap.transitions : kEmpty;
  WorldState cur = s;
  for (int i = 0; i < horizon && !cur.terminal; ++i) {
    const Action a = r.plan[static_cast<std::size_t>(i)];
    const auto* e = model.find(StateKey{cur.agent, cur.npc_pos, cur.consumed}, a);
    if (!e) {
      r.confidence = static_cast<double>(i) / horizon;
      break;
    }
    PredictedStep ps;
    ps.action = a;
    const Transition tr = predicted_transition(grid, cur, a, e->next, e->terminal, ps.events);
    ps.state = tr.next;
    evaluate_norms(grid, norms, tr, i + 1, ps, r);
    tally(ps.events, r);
    cur = tr.next;
    r.trajectory.push_back(std::move(ps));
  }
  return r;
}

double rollout_value(const Rollout& r, const ModelSnapshot& snap) {
  auto weight = [&](const std::string& id, double fallback) {
    if (!snap.goals) return fallback;
    return snap.goals->weight(id).value_or(fallback);
  };
  return weight("task_reward", 1.0) * (r.rewards - r.hazard_penalty) - weight("harm_to_other", 1.0) * r.harms;
}

bool ranks_before(const Hypothesis& a, const Hypothesis& b) {
  if (a.norm_cost != b.norm_cost) return a.norm_cost < b.norm_cost;
  if (a.value != b.value) return a.value > b.value;
  return std::lexicographical_compare(a.plan.begin(), a.plan.end(), b.plan.begin(), b.plan.end());
}

std::vector<Hypothesis> test_hypotheses(std::vector<Hypothesis> hs, const World& world, const ModelSnapshot& snap,
                                        const WorldState& s, int horizon, Basis basis, const TwinConfig& twin) {
  for (auto& h : hs) {
    const Rollout r = rollout(world, snap, s, h.plan, std::max(horizon, static_cast<int>(h.plan.size())), basis, twin);
    h.value = rollout_value(r, snap);
    h.norm_cost = r.norm_cost();
  }
  std::stable_sort(hs.begin(), hs.end(), ranks_before);
  return hs;
}

}  // namespace reflect
