#include "reflect/learning.hpp"

#include <algorithm>

namespace reflect {

std::string_view to_string(KolbPhase p) {
  switch (p) {
    case KolbPhase::ConcreteExperience: return "concrete_experience";
    case KolbPhase::ReflectiveObservation: return "reflective_observation";
    case KolbPhase::AbstractConceptualisation: return "abstract_conceptualisation";
    case KolbPhase::ActiveExperimentation: return "active_experimentation";
  }
  return "?";
}

std::optional<KolbPhase> parse_kolb_phase(std::string_view s) {
  for (auto p : {KolbPhase::ConcreteExperience, KolbPhase::ReflectiveObservation,
                 KolbPhase::AbstractConceptualisation, KolbPhase::ActiveExperimentation}) {
    if (to_string(p) == s) return p;
  }
  return std::nullopt;
}

void InferenceConfig::validate() const {
  if (s_min < 1) throw ConfigError("s_min must be >= 1");
  if (window < 0) throw ConfigError("window must be >= 0");
  if (templates_enabled.contains(Template::PreventOtherEntering)) {
    throw ConfigError("obligation templates cannot be inferred from sanctions");
  }
}

TransitionLearnReport learn_transitions(std::span<const Observation> delta, TransitionModel& model) {
  TransitionLearnReport report;
  for (const auto& obs : delta) {
    const auto& t = obs.transition;
    const StateKey from{t.prev.agent, t.prev.npc_pos, t.prev.consumed};
    const StateKey to{t.next.agent, t.next.npc_pos, t.next.consumed};
    const auto r = model.record(from, t.action, to, t.next.terminal);
    switch (r.outcome) {
      case TransitionModel::Outcome::Inserted: ++report.inserted; break;
      case TransitionModel::Outcome::Confirmed: ++report.confirmed; break;
      case TransitionModel::Outcome::Corrected:
        report.corrections.push_back({from, t.action, *r.previous, to});
        break;
    }
  }
  return report;
}

OtherLearnReport learn_other(std::span<const Observation> delta, OtherAgentModel& model, const GridSpec& grid) {
  OtherLearnReport report;
  for (const auto& obs : delta) {
    for (const auto& m : obs.transition.npc_moves) {
      if (m.blocked) continue;
      const Coord to = m.removed ? kRemoved : m.to;
      if (model.record(grid.npcs[m.npc].id, m.from, to)) ++report.corrected;
      ++report.recorded;
    }
  }
  return report;
}

std::vector<Predicate> enumerate_hypotheses(const GridSpec& grid, const InferenceConfig& cfg) {
  std::vector<Predicate> out;
  std::set<CellType> kinds;
  for (const auto& c : grid.cells) {
    if (c.type != CellType::Wall) kinds.insert(c.type);
  }
  if (cfg.templates_enabled.contains(Template::AgentInZone)) {
    for (const auto& [id, cells] : grid.zones) {
      Predicate p;
      p.tmpl = Template::AgentInZone;
      p.zone = id;
      out.push_back(p);
    }
  }
  for (auto tmpl : {Template::AgentEntersCellKind, Template::OtherEntersCellKind}) {
    if (!cfg.templates_enabled.contains(tmpl)) continue;
    for (CellType k : kinds) {
      Predicate p;
      p.tmpl = tmpl;
      p.kind = k;
      out.push_back(p);
    }
  }
  if (cfg.templates_enabled.contains(Template::StepCountExceeds)) {
    for (int n = 0; n < grid.episode_limit; ++n) {
      Predicate p;
      p.tmpl = Template::StepCountExceeds;
      p.n = n;
      out.push_back(p);
    }
  }
  return out;
}

std::string inferred_norm_id(const Predicate& p) { return "inferred/" + p.str(); }

InferenceReport infer_norms(std::span<const Observation> delta, NormModel& model, const InferenceConfig& cfg,
                            const GridSpec& grid) {
  InferenceReport report;
  for (const auto& obs : delta) {
    double penalty = 0.0;
    int sanctions = 0;
    for (const auto& ev : obs.events) {
      if (auto* s = std::get_if<SanctionEvent>(&ev)) {
        penalty += s->penalty;
        ++sanctions;
      }
    }
    const bool sanctioned = sanctions > 0;
    if (sanctioned) {
      penalty /= sanctions;
      ++report.sanctioned;
    } else {
      ++report.clean;
    }

    for (auto& h : model.hypotheses()) {
      if (!cfg.templates_enabled.contains(h.predicate.tmpl)) continue;
      if (!holds(h.predicate, grid, obs.transition)) continue;
      if (!sanctioned) {
        ++h.counterexamples;
        h.last_counterexample_tick = obs.tick;
        if (h.promoted) {
          h.promoted = false;
          NormChange change{NormChange::Kind::Demoted, *model.find(h.norm_id), h.support, h.counterexamples,
                            obs.tick};
          model.remove(h.norm_id);
          report.changes.push_back(std::move(change));
        }
        continue;
      }
      ++h.support;
      h.penalty_sum += penalty;
      if (!h.first_support_step) h.first_support_step = obs.tick;
      if (h.promoted || h.support < cfg.s_min) continue;
      const bool clean_record = cfg.window == 0 ? h.counterexamples == 0
                                                : (h.last_counterexample_tick < 0 ||
                                                   obs.tick - h.last_counterexample_tick > cfg.window);
      if (!clean_record) continue;
      const bool already_known = std::any_of(model.norms().begin(), model.norms().end(), [&](const NormSpec& n) {
        return n.active && n.source != NormSource::Inferred && n.predicate == h.predicate;
      });
      if (already_known) continue;
      NormSpec norm;
      norm.id = inferred_norm_id(h.predicate);
      norm.kind = NormKind::Prohibition;
      norm.predicate = h.predicate;
      norm.severity = h.penalty_sum / h.support;
      norm.source = NormSource::Inferred;
      if (!model.add(norm)) continue;
      h.promoted = true;
      h.norm_id = norm.id;
      report.changes.push_back({NormChange::Kind::Promoted, norm, h.support, h.counterexamples, obs.tick});
    }
  }
  return report;
}

bool integrate_sign(NormModel& norms, GoalStore& goals, const SignPerceived& sign, long step) {
  NormSpec n = sign.norm;
  n.source = NormSource::Environment;
  n.active = true;
  if (!norms.add(n)) return false;
  if (sign.goal) goals.set(sign.goal->goal_id, sign.goal->weight, GoalSource::Environment, step);
  return true;
}

void integrate_design_goal(ModelStore& store, const DesignPayload& payload, long step) {
  if (const auto* norm = std::get_if<NormSpec>(&payload)) {
    NormSpec n = *norm;
    try {
      n.validate();
    } catch (const ConfigError& e) {
      throw UnknownGoalSchema(e.what());
    }
    n.source = NormSource::Design;
    n.active = true;
    auto& model = store.mutable_norms();
    if (!model.add(n)) {
      // Re-issuing a design norm replaces the earlier definition.
      model.remove(n.id);
      model.add(n);
    }
    return;
  }
  const auto& g = std::get<GoalWeight>(payload);
  store.mutable_goals().set(g.goal_id, g.weight, GoalSource::Design, step);
}

}  // namespace reflect
