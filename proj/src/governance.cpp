#include "reflect/governance.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>

namespace reflect {

WhatIf what_if(const World& world, const WorldState& s, Action a, const ModelSnapshot& snap, int horizon,
               Basis basis, const TwinConfig& twin) {
  if (horizon < 1) throw ConfigError("what-if horizon must be >= 1");
  const Action plan[1] = {a};
  WhatIf w{rollout(world, snap, s, plan, horizon, basis, twin), 0.0};
  w.norm_cost = w.rollout.norm_cost();
  return w;
}

std::string_view to_string(Verdict::Kind k) {
  switch (k) {
    case Verdict::Kind::Allow: return "allow";
    case Verdict::Kind::Block: return "block";
    case Verdict::Kind::Compromise: return "compromise";
  }
  return "?";
}

Action Verdict::executed() const {
  switch (kind) {
    case Kind::Allow: return intended;
    case Kind::Block: return suggestion.value_or(Action::Wait);
    case Kind::Compromise: return chosen;
  }
  return Action::Wait;
}

std::vector<CandidateCost> cost_candidates(const World& world, const WorldState& s, const ModelSnapshot& snap,
                                           const GovernorConfig& cfg) {
  std::vector<CandidateCost> out(kActionCount);
  std::vector<const NormSpec*> obligations;
  int obligation_horizon = 0;
  if (snap.norms) {
    for (const auto& n : snap.norms->norms()) {
      if (n.active && n.predicate.tmpl == Template::PreventOtherEntering) {
        obligations.push_back(&n);
        obligation_horizon = std::max(obligation_horizon, n.predicate.horizon);
      }
    }
  }

  std::vector<Rollout> longer;
  for (std::size_t i = 0; i < kActionCount; ++i) {
    auto& c = out[i];
    c.action = kActions[i];
    const auto w = what_if(world, s, c.action, snap, 1, cfg.basis, cfg.twin);
    c.violations = w.rollout.violations;
    for (const auto& v : c.violations) c.prohibition += v.severity;
    c.value = rollout_value(w.rollout, snap);
    if (!obligations.empty()) {
      const Action plan[1] = {c.action};
      longer.push_back(rollout(world, snap, s, plan, std::max(1, obligation_horizon), cfg.basis, cfg.twin));
    }
  }

  for (const NormSpec* n : obligations) {
    std::array<int, kActionCount> entries{};
    for (std::size_t i = 0; i < kActionCount; ++i) {
      auto it = longer[i].entries_by_obligation.find(n->id);
      entries[i] = it == longer[i].entries_by_obligation.end() ? 0 : it->second;
    }
    const int lo = *std::min_element(entries.begin(), entries.end());
    const int hi = *std::max_element(entries.begin(), entries.end());
    if (hi == 0 || lo == hi) continue;
    for (std::size_t i = 0; i < kActionCount; ++i) {
      if (entries[i] == lo) continue;
      out[i].obligation += n->severity * (entries[i] - lo);
      int first = 1;
      for (const auto& step : longer[i].trajectory) {
        bool entered = false;
        for (const auto& ev : step.events) entered = entered || std::holds_alternative<HarmEvent>(ev);
        if (entered) break;
        ++first;
      }
      out[i].violations.push_back({n->id, std::min(first, longer[i].horizon), n->severity});
    }
  }
  return out;
}

Verdict vet(const World& world, const WorldState& s, Action intended, const ModelSnapshot& snap,
            const GovernorConfig& cfg) {
  Verdict v;
  v.intended = intended;
  v.candidates = cost_candidates(world, s, snap, cfg);
  const CandidateCost& mine = v.candidates[index_of(intended)];
  if (mine.cost() == 0.0) return v;

  auto pref = [&](Action a) { return cfg.preference ? (*cfg.preference)[index_of(a)] : 0.0; };
  const CandidateCost* best = nullptr;
  for (const auto& c : v.candidates) {
    if (c.cost() != 0.0) continue;
    if (!best || c.value > best->value || (c.value == best->value && pref(c.action) > pref(best->action))) {
      best = &c;
    }
  }
  if (best) {
    v.kind = Verdict::Kind::Block;
    v.violations = mine.violations;
    v.suggestion = best->action;
    return v;
  }

  // Nothing is clean: least residual cost, preferring the intention, then Wait.
  const CandidateCost* pick = &mine;
  const CandidateCost& wait = v.candidates[index_of(Action::Wait)];
  if (wait.cost() < pick->cost()) pick = &wait;
  for (const auto& c : v.candidates) {
    if (c.cost() < pick->cost()) pick = &c;
  }
  v.kind = Verdict::Kind::Compromise;
  v.violations = mine.violations;
  v.chosen = pick->action;
  v.residual_cost = pick->cost();
  return v;
}

std::vector<Action> plan_to_reward(const TransitionModel& model, const GridSpec& grid, const StateKey& from,
                                   std::size_t max_depth) {
  std::map<StateKey, std::pair<StateKey, Action>> parent;
  std::map<StateKey, std::size_t> depth{{from, 0}};
  std::deque<StateKey> frontier{from};
  while (!frontier.empty()) {
    const StateKey cur = frontier.front();
    frontier.pop_front();
    if (depth[cur] >= max_depth) continue;
    for (Action a : kActions) {
      const auto* e = model.find(cur, a);
      if (!e) continue;
      const bool collects = (e->next.consumed & ~cur.consumed) != 0 && grid.type_at(e->next.agent) == CellType::Reward;
      if (collects) {
        std::vector<Action> plan{a};
        for (StateKey k = cur; k != from;) {
          const auto& [prev, act] = parent.at(k);
          plan.push_back(act);
          k = prev;
        }
        std::reverse(plan.begin(), plan.end());
        return plan;
      }
      if (e->terminal || depth.contains(e->next)) continue;
      depth[e->next] = depth[cur] + 1;
      parent.emplace(e->next, std::make_pair(cur, a));
      frontier.push_back(e->next);
    }
  }
  return {};
}

namespace {

// Greedy continuation of a prefix in the twin, padded to the horizon.
std::vector<Action> greedy_plan(const World& world, const WorldState& s, const Policy& policy,
                                std::vector<Action> prefix, int horizon) {
  WorldState cur = s;
  std::vector<Action> plan;
  for (int i = 0; i < horizon; ++i) {
    Action a = static_cast<std::size_t>(i) < prefix.size() ? prefix[static_cast<std::size_t>(i)]
                                                           : policy.greedy(world.key(cur));
    plan.push_back(a);
    if (!cur.terminal) cur = step_world(world.grid(), cur, a).first;
  }
  return plan;
}

}  // namespace

std::vector<Hypothesis> deliberate(const World& world, const WorldState& s, const ModelSnapshot& snap,
                                   const DeliberationInput& in) {
  if (in.k < 2) throw ConfigError("deliberation needs k >= 2");
  const int h = std::max(1, in.horizon);
  std::vector<Hypothesis> hs;
  std::set<std::vector<Action>> seen;
  auto offer = [&](std::vector<Action> plan, const std::string& generator) {
    if (plan.empty()) return;
    plan.resize(static_cast<std::size_t>(h), Action::Wait);
    if (!seen.insert(plan).second) return;
    Hypothesis hyp;
    hyp.id = generator + "#" + std::to_string(hs.size());
    hyp.plan = std::move(plan);
    hyp.generator = generator;
    hs.push_back(std::move(hyp));
  };

  offer(std::vector<Action>(static_cast<std::size_t>(h), Action::Wait), "disengage");
  static const Policy kBlank;
  const Policy& policy = in.policy ? *in.policy : kBlank;
  offer(greedy_plan(world, s, policy, {}, h), "greedy");
  if (snap.transitions) {
    offer(plan_to_reward(*snap.transitions, world.grid(), world.key(s), static_cast<std::size_t>(h)), "planner");
  }
  static const VisitCounts kNoVisits;
  const VisitCounts& visits = in.visits ? *in.visits : kNoVisits;
  for (Action first : propose_exploration(world.key(s), visits)) {
    offer(greedy_plan(world, s, policy, {first}, h), "explore");
  }
  return test_hypotheses(std::move(hs), world, snap, s, h, in.basis, in.twin);
}

ProgressReport assess_progress(std::span<const double> returns, int window, double epsilon,
                               const GoalStore* goals, long step, double bonus_weight) {
  if (window < 1) throw ConfigError("progress window must be >= 1");
  const auto w = static_cast<std::size_t>(window);
  if (returns.size() < w + 1) {
    throw InsufficientHistory("need " + std::to_string(w + 1) + " episodes, have " +
                              std::to_string(returns.size()));
  }
  const auto last = returns.subspan(returns.size() - w);
  const std::size_t prev_n = std::min(w, returns.size() - w);
  const auto prev = returns.subspan(returns.size() - w - prev_n, prev_n);
  ProgressReport r;
  r.window = window;
  r.improvement = *std::max_element(last.begin(), last.end()) - *std::max_element(prev.begin(), prev.end());
  r.stuck = r.improvement < epsilon;
  if (r.stuck) {
    GoalRevision rev;
    rev.step = step;
    rev.goal_id = "exploration_bonus";
    if (goals) rev.old_weight = goals->weight(rev.goal_id);
    rev.new_weight = bonus_weight;
    rev.source = GoalSource::Reflection;
    r.suggestion = rev;
  }
  return r;
}

LearnerReport introspect_learning(const Policy& policy, const LearningStats& stats) {
  LearnerReport r;
  r.strategy = policy.strategy();
  r.hyperparameters = policy.config();
  r.reachable_pairs = stats.reachable ? stats.reachable->size() : stats.reachable_pairs;
  if (stats.visits) {
    if (stats.reachable) {
      for (const auto& k : *stats.reachable) {
        if (stats.visits->get(k.first, k.second) > 0) ++r.visited_pairs;
      }
    } else {
      r.visited_pairs = stats.visits->size();
    }
  }
  if (r.reachable_pairs > 0) {
    r.coverage = std::min(1.0, static_cast<double>(r.visited_pairs) / static_cast<double>(r.reachable_pairs));
  }
  if (stats.predictions > 0) {
    r.prediction_accuracy = static_cast<double>(stats.correct_predictions) / stats.predictions;
  }
  return r;
}

std::vector<SaKey> reachable_pairs(const World& world, const WorldState& start, std::size_t cap) {
  // Breadth-first from the start reaches each key at its earliest step, so the
  // episode time limit prunes exactly the keys no episode can reach.
  std::set<StateKey> seen{world.key(start)};
  std::deque<WorldState> frontier{start};
  std::vector<SaKey> out;
  while (!frontier.empty() && seen.size() <= cap) {
    WorldState cur = frontier.front();
    frontier.pop_front();
    if (cur.terminal) continue;
    const StateKey k = world.key(cur);
    for (Action a : kActions) {
      out.emplace_back(k, a);
      const WorldState next = step_world(world.grid(), cur, a).first;
      if (seen.insert(world.key(next)).second) frontier.push_back(next);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

void switch_strategy(Policy& policy, std::string_view target) { policy.switch_to(parse_strategy(target)); }

std::string_view to_string(Resolution r) { return r == Resolution::TrustEmpirical ? "trust_empirical" : "unresolved"; }

RuleSetModel re_represent(const TransitionModel& model, const GridSpec& grid) {
  if (model.empty()) throw EmptyModel("cannot re-represent an empty model");
  RuleSetModel rs;
  std::map<Action, std::vector<std::pair<SaKey, Coord>>> by_action;
  for (const auto& [sa, e] : model.table()) by_action[sa.second].emplace_back(sa, e.next.agent);

  std::vector<Guard> guards;
  for (auto t : {CellType::Empty, CellType::Wall, CellType::Reward, CellType::Hazard, CellType::Sign,
                 CellType::Exit}) {
    guards.push_back({Guard::Kind::TargetType, t});
  }
  for (auto t : {CellType::Empty, CellType::Reward, CellType::Hazard, CellType::Sign, CellType::Exit}) {
    guards.push_back({Guard::Kind::SourceType, t});
  }

  for (Action a : kActions) {
    auto it = by_action.find(a);
    if (it == by_action.end()) continue;
    const auto& samples = it->second;
    std::vector<Effect> effects;
    if (a != Action::Wait) effects.push_back({Effect::Kind::Step, displacement(a)});
    effects.push_back({Effect::Kind::NoMove, {}});

    auto fits = [&](const Effect& e, const SaKey& sa, Coord next) {
      return rs.apply(e, grid, sa.first) == next;
    };
    // Default rule: the effect most samples agree with.
    Effect base = effects.front();
    std::size_t base_hits = 0;
    for (const auto& e : effects) {
      std::size_t hits = 0;
      for (const auto& [sa, next] : samples) hits += fits(e, sa, next);
      if (hits > base_hits) {
        base = e;
        base_hits = hits;
      }
    }
    // Specific rules go in front of the default while they explain more
    // samples than they break.
    std::vector<Rule> specific;
    auto predicted = [&](const SaKey& sa) {
      for (const auto& r : specific) {
        if (rs.guard_holds(r.guard, grid, sa.first, a)) return rs.apply(r.effect, grid, sa.first);
      }
      return rs.apply(base, grid, sa.first);
    };
    for (;;) {
      long best_gain = 0;
      Rule best_rule;
      for (const auto& g : guards) {
        for (const auto& e : effects) {
          long gain = 0;
          for (const auto& [sa, next] : samples) {
            if (!rs.guard_holds(g, grid, sa.first, a)) continue;
            const bool now = predicted(sa) == next;
            const bool then = rs.apply(e, grid, sa.first) == next;
            gain += static_cast<long>(then) - static_cast<long>(now);
          }
          if (gain > best_gain) {
            best_gain = gain;
            best_rule = Rule{g, a, e};
          }
        }
      }
      if (best_gain <= 0) break;
      specific.push_back(best_rule);
    }
    for (const auto& r : specific) rs.rules.push_back(r);
    rs.rules.push_back(Rule{{Guard::Kind::Always, CellType::Empty}, a, base});
    for (const auto& [sa, next] : samples) {
      if (predicted(sa) != next) rs.exceptions[sa] = next;
    }
  }
  return rs;
}

std::vector<Inconsistency> reconcile(const TransitionModel& a, RuleSetModel& b, const GridSpec& grid, bool resolve) {
  if (a.empty()) throw EmptyModel("cannot reconcile an empty model");
  std::vector<Inconsistency> out;
  for (const auto& [sa, e] : a.table()) {
    const auto r = b.predict(grid, sa.first, sa.second);
    if (r && *r == e.next.agent) continue;
    out.push_back({sa, e.next.agent, r, Resolution::Unresolved});
  }
  if (resolve) {
    for (auto& inc : out) {
      b.exceptions[inc.key] = *inc.tabular;
      inc.resolution = Resolution::TrustEmpirical;
    }
  }
  return out;
}

}  // namespace reflect
