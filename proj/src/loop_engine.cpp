#include "reflect/loop_engine.hpp"

#include <algorithm>
#include <charconv>
#include <deque>

namespace reflect {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <class T>
T number(std::string_view s, std::string_view what) {
  T v{};
  s = trim(s);
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw ConfigError("bad " + std::string(what) + " '" + std::string(s) + "'");
  }
  return v;
}

std::optional<KolbPhase> phase(KolbPhase p) { return p; }

}  // namespace

Injection Injection::parse(std::string_view line) {
  const auto eq = line.find('=');
  if (eq == std::string_view::npos) throw ConfigError("injection needs 'STEP = payload': " + std::string(line));
  Injection inj;
  inj.step = number<long>(line.substr(0, eq), "injection step");
  if (inj.step < 0) throw ConfigError("injection step must be >= 0");
  std::string_view rest = trim(line.substr(eq + 1));
  const auto sp = rest.find(' ');
  const std::string_view verb = rest.substr(0, sp);
  const std::string_view arg = sp == std::string_view::npos ? std::string_view{} : trim(rest.substr(sp + 1));
  if (verb == "norm") {
    inj.kind = Kind::Norm;
    inj.norm = NormSpec::parse(arg, NormSource::Design);
  } else if (verb == "goal") {
    inj.kind = Kind::Goal;
    const auto s2 = arg.find(' ');
    if (s2 == std::string_view::npos) throw ConfigError("goal injection needs 'goal ID WEIGHT'");
    inj.goal.goal_id = std::string(arg.substr(0, s2));
    inj.goal.weight = number<double>(arg.substr(s2 + 1), "goal weight");
  } else if (verb == "switch") {
    inj.kind = Kind::Switch;
    inj.strategy = std::string(arg);
    parse_strategy(inj.strategy);
  } else {
    throw ConfigError("unknown injection '" + std::string(verb) + "'");
  }
  inj.text = std::string(trim(line));
  return inj;
}

std::string Injection::str() const {
  switch (kind) {
    case Kind::Norm: return std::to_string(step) + " = norm " + norm.str();
    case Kind::Goal: {
      ojson w = goal.weight;
      return std::to_string(step) + " = goal " + goal.goal_id + " " + w.dump();
    }
    case Kind::Switch: return std::to_string(step) + " = switch " + strategy;
  }
  return {};
}

bool EngineConfig::composition_enabled(Composition c) const {
  auto it = reflection.compositions.find(c);
  const auto sw = it == reflection.compositions.end() ? CompositionSwitch::Auto : it->second;
  if (sw == CompositionSwitch::Off) return false;
  return members_enabled(c, TierConfig::for_tier(tier));
}

void EngineConfig::validate() const {
  const TierConfig t = TierConfig::for_tier(tier);
  policy.validate();
  inference.validate();
  if (!(fidelity >= 0.0 && fidelity <= 1.0)) throw ConfigError("twin fidelity must be in [0, 1]");
  if (reflection.window < 1) throw ConfigError("reflection window must be >= 1");
  if (reflection.schedule < 1) throw ConfigError("reflection schedule must be >= 1");
  if (reflection.k < 2) throw ConfigError("deliberation k must be >= 2");
  if (reflection.horizon < 1) throw ConfigError("deliberation horizon must be >= 1");
  for (const auto& inj : injections) {
    const LoopId need = inj.kind == Injection::Kind::Switch ? LoopId::L7 : LoopId::L4;
    if (!t.has(need)) {
      throw ConfigError("injection '" + inj.text + "' needs " + std::string(to_string(need)) +
                        ", which tier " + std::to_string(tier) + " does not enable");
    }
  }
  for (const auto& [c, sw] : reflection.compositions) {
    if (sw == CompositionSwitch::On && !members_enabled(c, t)) {
      throw ConfigError("composition " + std::string(to_string(c)) + " needs loops disabled at tier " +
                        std::to_string(tier));
    }
  }
}

std::vector<SaKey> bottom_decile(const std::vector<SaKey>& universe, const VisitCounts& visits) {
  std::vector<std::pair<int, SaKey>> ranked;
  ranked.reserve(universe.size());
  for (const auto& k : universe) ranked.emplace_back(visits.get(k.first, k.second), k);
  std::sort(ranked.begin(), ranked.end());
  const std::size_t n = (universe.size() + 9) / 10;
  std::vector<SaKey> out;
  for (std::size_t i = 0; i < n && i < ranked.size(); ++i) out.push_back(ranked[i].second);
  return out;
}

Engine::Engine(std::shared_ptr<const GridSpec> grid, EngineConfig cfg, Tracer& tracer)
    : world_(std::move(grid)),
      cfg_(std::move(cfg)),
      tier_(TierConfig::for_tier(cfg_.tier)),
      tracer_(tracer),
      store_(cfg_.log_capacity),
      policy_(cfg_.policy),
      rng_(cfg_.seed) {
  cfg_.validate();
  const GridSpec& g = world_.grid();
  for (const auto& [id, w] : cfg_.standard) store_.mutable_goals().set(id, w, GoalSource::Design, 0);
  for (const auto& gn : g.norms) {
    if (gn.disclosure == Disclosure::Design) {
      NormSpec n = gn.spec;
      n.source = NormSource::Design;
      store_.mutable_norms().add(n);
    }
  }
  store_.mutable_norms().set_hypothesis_space(enumerate_hypotheses(g, cfg_.inference));
  refresh_standard();
  state_ = world_.initial_state(0, 0);
  for (const auto& ev : world_.observe(state_).events) {
    if (auto* s = std::get_if<SignPerceived>(&ev)) pending_signs_.emplace_back(*s, 0);
  }
}

void Engine::refresh_standard() { standard_ = PerformanceStandard::from_goals(store_.goals()); }

long Engine::emit(LoopId loop, std::optional<KolbPhase> ph, std::string_view kind, ojson payload) {
  return tracer_.emit(loop, ph, kind, tick_, state_.episode, std::move(payload));
}

const std::vector<SaKey>& Engine::reachable() {
  if (!reachable_) reachable_ = reachable_pairs(world_, world_.initial_state(0, 0));
  return *reachable_;
}

void Engine::run(long steps) {
  for (long i = 0; i < steps; ++i) run_step();
}

void Engine::apply_injections() {
  for (const auto& inj : cfg_.injections) {
    if (inj.step != tick_) continue;
    if (inj.kind == Injection::Kind::Switch) {
      const auto from = std::string(to_string(policy_.strategy()));
      switch_strategy(policy_, inj.strategy);
      emit(LoopId::L7, std::nullopt, "switch_strategy",
           ojson{{"from", from}, {"to", std::string(to_string(policy_.strategy()))}, {"source", "control"}});
      continue;
    }
    ojson p{{"injection", inj.text}};
    try {
      if (inj.kind == Injection::Kind::Norm) {
        integrate_design_goal(store_, inj.norm, tick_);
        p["norm"] = inj.norm.id;
      } else {
        integrate_design_goal(store_, inj.goal, tick_);
        p["goal"] = inj.goal.goal_id;
        p["weight"] = inj.goal.weight;
        refresh_standard();
      }
      p["accepted"] = true;
    } catch (const UnknownGoalSchema& e) {
      p["accepted"] = false;
      p["error"] = e.what();
    }
    emit(LoopId::L4, std::nullopt, "integrate_design_goal", std::move(p));
  }
}

void Engine::sense() {
  const GridSpec& g = world_.grid();
  if (pending_ && tier_.has(LoopId::L2)) {
    const Observation& obs = *pending_;
    store_.record(obs);
    emit(LoopId::L2, phase(KolbPhase::ReflectiveObservation), "observe",
         ojson{{"tick", obs.tick}, {"episode", obs.episode}, {"step", obs.step()}, {"events", obs.events.size()}});
    const std::span<const Observation> delta(&obs, 1);

    const auto tr = learn_transitions(delta, store_.mutable_transitions());
    ojson corr = ojson::array();
    for (const auto& c : tr.corrections) {
      corr.push_back(ojson{{"state", c.state.str()}, {"action", std::string(to_string(c.action))},
                           {"stale", c.stale.str()}, {"fresh", c.fresh.str()}});
    }
    emit(LoopId::L2, phase(KolbPhase::AbstractConceptualisation), "learn_transitions",
         ojson{{"inserted", tr.inserted}, {"confirmed", tr.confirmed}, {"corrections", std::move(corr)}});

    const auto other = learn_other(delta, store_.mutable_others(), g);
    emit(LoopId::L2, phase(KolbPhase::AbstractConceptualisation), "learn_other",
         ojson{{"recorded", other.recorded}, {"corrected", other.corrected}});

    auto& norms = store_.mutable_norms();
    const auto inf = infer_norms(delta, norms, cfg_.inference, g);
    ojson changes = ojson::array();
    for (const auto& c : inf.changes) {
      ojson j = to_json(c);
      for (const auto& h : norms.hypotheses()) {
        if (h.predicate == c.norm.predicate && h.first_support_step) j["first_support_tick"] = *h.first_support_step;
      }
      changes.push_back(std::move(j));
    }
    emit(LoopId::L2, phase(KolbPhase::AbstractConceptualisation), "infer_norms",
         ojson{{"sanctioned", inf.sanctioned}, {"clean", inf.clean}, {"changes", std::move(changes)}});
  }
  pending_.reset();

  if (tier_.has(LoopId::L3)) {
    for (const auto& [sign, perceived] : pending_signs_) {
      const auto before = policy_.hash();
      auto& norms = store_.mutable_norms();
      auto& goals = store_.mutable_goals();
      if (!integrate_sign(norms, goals, sign, tick_)) continue;
      refresh_standard();
      const auto after = policy_.hash();
      ojson p{{"norm", sign.norm.id},
              {"spec", sign.norm.str()},
              {"at", to_json(sign.at)},
              {"perceived_tick", perceived},
              {"policy_hash_before", hex64(before)},
              {"policy_hash_after", hex64(after)}};
      if (sign.goal) p["goal"] = ojson::array({sign.goal->goal_id, sign.goal->weight});
      emit(LoopId::L3, phase(KolbPhase::AbstractConceptualisation), "integrate_sign", std::move(p));
    }
  }
  pending_signs_.clear();

  if (tier_.has(LoopId::L2)) {
    ojson order = ojson::array();
    for (Action a : propose_exploration(world_.key(state_), visits_)) order.push_back(std::string(to_string(a)));
    emit(LoopId::L2, phase(KolbPhase::ActiveExperimentation), "propose", ojson{{"exploration_order", order}});
  }
}

void Engine::run_step() {
  apply_injections();  // validate() guarantees the tier can receive them
  sense();

  const StateKey key = world_.key(state_);
  const Selection sel = select_action(key, policy_, rng_);
  Action intended = sel.action;
  std::string source = sel.explored ? "explore" : "greedy";
  if (curiosity_) {
    if (auto next = curiosity_action()) {
      const auto& [a, target] = *next;
      intended = a;
      source = "curiosity";
      emit(LoopId::L2, phase(KolbPhase::ActiveExperimentation), "curiosity_propose",
           ojson{{"state", key.str()},
                 {"action", std::string(to_string(a))},
                 {"visits", visits_.get(key, a)},
                 {"target", ojson::array({target.first.str(), std::string(to_string(target.second))})},
                 {"target_visits", visits_.get(target.first, target.second)}});
    }
  } else if (sel.explored && tier_.has(LoopId::L5)) {
    DeliberationInput in;
    in.policy = &policy_;
    in.visits = &visits_;
    in.k = cfg_.reflection.k;
    in.horizon = cfg_.reflection.horizon;
    in.basis = cfg_.basis;
    in.twin = {cfg_.fidelity, cfg_.seed};
    const auto snap = store_.snapshot();
    const auto ranked = deliberate(world_, state_, *snap, in);
    const Hypothesis* pick = nullptr;
    for (const auto& h : ranked) {
      if (h.generator == "explore") {
        pick = &h;
        break;
      }
    }
    ojson cands = ojson::array();
    for (const auto& h : ranked) cands.push_back(to_json(h));
    if (pick) {
      intended = pick->plan.front();
      source = "deliberate";
    }
    emit(LoopId::L5, phase(KolbPhase::ActiveExperimentation), "deliberate",
         ojson{{"candidates", std::move(cands)}, {"chosen", pick ? pick->id : ""}});
  }

  Action executed = intended;
  std::optional<Verdict> verdict;
  if (tier_.has(LoopId::L1)) {
    GovernorConfig gc;
    gc.basis = cfg_.basis;
    gc.twin = {cfg_.fidelity, cfg_.seed};
    gc.preference = policy_.action_values(key);
    {
      const auto snap = store_.snapshot();
      verdict = vet(world_, state_, intended, *snap, gc);
    }
    executed = verdict->executed();
    ojson p = to_json(*verdict);
    p["state"] = key.str();
    const long seq = emit(LoopId::L1, std::nullopt, "vet", std::move(p));
    if (verdict->kind != Verdict::Kind::Allow) {
      open_verdicts_.push_back(seq);
      intervened_.insert({key, intended});
    }
  }

  const WorldState prev = state_;
  auto [next, percept] = world_.step(state_, executed);
  const StateKey next_key = world_.key(next);

  const bool novel = visits_.get(key, executed) == 0;
  Feedback fb = criticize(percept, standard_, CriticContext{0, false, tick_});
  const double task_scalar = fb.scalar;
  if (novel) {
    if (auto w = store_.goals().weight("exploration_bonus")) {
      fb.components["exploration_bonus"] = 1.0;
      fb.scalar += *w;
    }
  }
  const bool intervened = verdict && verdict->kind != Verdict::Kind::Allow && tier_.has(LoopId::L5);
  Feedback penalty;
  if (intervened) penalty = criticize(Percept{}, standard_, CriticContext{1, false, tick_});

  if (tier_.has(LoopId::L2)) {
    // Scored before this transition is learned at the next sense.
    if (auto pred = store_.transitions().predict(key, executed)) {
      ++predictions_;
      if (*pred == next_key) ++correct_predictions_;
    }
  }

  ojson p;
  p["tick"] = tick_;
  p["intended"] = std::string(to_string(intended));
  p["action"] = std::string(to_string(executed));
  p["source"] = source;
  p["prev"] = key.str();
  p["next"] = next_key.str();
  p["prev_step"] = prev.step;
  p["next_step"] = next.step;
  p["terminal"] = next.terminal;
  ojson moves = ojson::array();
  for (const auto& m : percept.npc_moves) moves.push_back(to_json(m));
  p["npc_moves"] = std::move(moves);
  p["events"] = to_json(percept.events);
  p["feedback"] = fb.scalar;
  if (intervened) p["intervention_penalty"] = penalty.scalar;
  emit(LoopId::Core, phase(KolbPhase::ConcreteExperience), "step", std::move(p));

  policy_.learn(fb, key, executed, next_key, next.terminal);
  if (intervened) policy_.learn(penalty, key, intended, key, false);
  visits_.add(key, executed);
  episode_return_ += task_scalar;

  pending_ = Observation{prev.episode, tick_, Transition{prev, executed, next, percept.npc_moves}, percept.events};
  for (const auto& ev : percept.events) {
    if (auto* s = std::get_if<SignPerceived>(&ev)) pending_signs_.emplace_back(*s, tick_);
  }

  state_ = next;
  ++tick_;
  if (curiosity_) check_curiosity();
  if (state_.terminal) {
    EndReason reason = EndReason::TimeLimit;
    for (const auto& ev : percept.events) {
      if (auto* e = std::get_if<EpisodeEnded>(&ev)) reason = e->reason;
    }
    end_episode(reason);
  }
}

void Engine::end_episode(EndReason reason) {
  const long tick = tick_ - 1;
  tracer_.emit(LoopId::Core, std::nullopt, "episode_end", tick, state_.episode,
               ojson{{"episode", state_.episode},
                     {"return", episode_return_},
                     {"steps", state_.step},
                     {"reason", std::string(to_string(reason))}});
  returns_.push_back(episode_return_);
  episode_return_ = 0.0;
  const int done = static_cast<int>(returns_.size());
  const auto& rc = cfg_.reflection;

  if (tier_.has(LoopId::L6) && returns_.size() >= static_cast<std::size_t>(rc.window) + 1) {
    const auto rep = assess_progress(returns_, rc.window, rc.epsilon, &store_.goals(), tick_, rc.bonus_weight);
    ojson p = to_json(rep);
    p["episode"] = state_.episode;
    last_progress_seq_ = emit(LoopId::L6, std::nullopt, "assess_progress", std::move(p));
    last_progress_ = rep;
    if (rep.stuck) {
      if (rc.self_apply && rep.suggestion) {
        store_.mutable_goals().set(rep.suggestion->goal_id, rep.suggestion->new_weight, GoalSource::Reflection, tick_,
                                   "exploration bonus from progress reflection");
        refresh_standard();
        emit(LoopId::L6, std::nullopt, "apply_goal_revision", to_json(*rep.suggestion));
      }
      if (!curiosity_ && cfg_.composition_enabled(Composition::Curiosity)) start_curiosity(last_progress_seq_);
      if (cfg_.composition_enabled(Composition::DeliberativeDirection)) {
        // Weigh directions for further learning against how often governance
        // had to intervene recently.
        const double blocked = static_cast<double>(open_verdicts_.size());
        ojson dirs = ojson::array();
        dirs.push_back(ojson{{"direction", "explore"}, {"score", 1.0}});
        dirs.push_back(ojson{{"direction", "switch_strategy"}, {"score", blocked > 0 ? 0.5 : 0.25}});
        dirs.push_back(ojson{{"direction", "review_norms"}, {"score", blocked > 0 ? 0.75 : 0.0}});
        emit(LoopId::L8, std::nullopt, "deliberate_direction",
             ojson{{"progress_seq", last_progress_seq_},
                   {"verdict_seqs", open_verdicts_},
                   {"directions", std::move(dirs)},
                   {"chosen", "explore"}});
      }
    }
  }

  if (tier_.has(LoopId::L7) && done % rc.schedule == 0) {
    LearningStats stats;
    stats.visits = &visits_;
    stats.reachable = &reachable();
    stats.predictions = predictions_;
    stats.correct_predictions = correct_predictions_;
    const auto rep = introspect_learning(policy_, stats);
    last_learner_ = rep;
    emit(LoopId::L7, std::nullopt, "introspect", to_json(rep));
    predictions_ = correct_predictions_ = 0;
  }

  if (tier_.has(LoopId::L8) && done % rc.schedule == 0) {
    reflect_models(store_.rules() ? "reconcile" : "re_represent", ojson::object());
    if (cfg_.composition_enabled(Composition::GovernanceReflection)) {
      // Verdict details stay in the trace; the review cites them by seq.
      emit(LoopId::L8, std::nullopt, "governance_review",
           ojson{{"verdict_seqs", open_verdicts_}, {"reviewed", open_verdicts_.size()}});
      open_verdicts_.clear();
    }
  }

  state_ = world_.next_episode(state_);
  policy_.end_episode();
  for (const auto& ev : world_.observe(state_).events) {
    if (auto* s = std::get_if<SignPerceived>(&ev)) pending_signs_.emplace_back(*s, tick_);
  }
}

void Engine::reflect_models(std::string_view kind, ojson extra) {
  const GridSpec& g = world_.grid();
  ojson p = std::move(extra);
  try {
    if (kind == "reconcile") {
      const auto incs = reconcile(store_.transitions(), store_.mutable_rules(), g, true);
      ojson list = ojson::array();
      for (std::size_t i = 0; i < incs.size() && i < 8; ++i) list.push_back(to_json(incs[i]));
      p["inconsistencies"] = incs.size();
      p["sample"] = std::move(list);
      p["exceptions"] = store_.rules()->exceptions.size();
    } else {
      store_.mutable_rules() = re_represent(store_.transitions(), g);
      p["rules"] = to_json(*store_.rules()).at("rules");
      p["exceptions"] = store_.rules()->exceptions.size();
    }
    p["model_size"] = store_.transitions().size();
  } catch (const EmptyModel& e) {
    p["error"] = e.what();
  }
  emit(LoopId::L8, std::nullopt, kind, std::move(p));
}

void Engine::start_curiosity(long trigger_seq) {
  Curiosity c;
  const auto d = bottom_decile(reachable(), visits_);
  c.decile.insert(d.begin(), d.end());
  for (const auto& k : c.decile) c.baseline += visits_.get(k.first, k.second);
  // An untouched decile has no coverage to double; only the budget ends it.
  c.target = c.baseline > 0 ? 2 * c.baseline : -1;
  c.started = tick_;
  c.trigger_seq = trigger_seq;
  c.model_size = store_.transitions().size();
  emit(LoopId::L6, std::nullopt, "composition",
       ojson{{"name", std::string(to_string(Composition::Curiosity))},
             {"event", "start"},
             {"trigger_seq", trigger_seq},
             {"decile", c.decile.size()},
             {"baseline", c.baseline},
             {"target", c.target}});
  curiosity_ = std::move(c);
}

void Engine::check_curiosity() {
  long sum = 0;
  for (const auto& k : curiosity_->decile) sum += visits_.get(k.first, k.second);
  const bool reached = curiosity_->target > 0 && sum >= curiosity_->target;
  const bool expired = tick_ - curiosity_->started >= cfg_.reflection.curiosity_budget;
  if (!reached && !expired) return;
  const Curiosity c = *curiosity_;
  curiosity_.reset();
  emit(LoopId::L6, std::nullopt, "composition",
       ojson{{"name", std::string(to_string(Composition::Curiosity))},
             {"event", "end"},
             {"trigger_seq", c.trigger_seq},
             {"reason", reached ? "target" : "budget"},
             {"visits", sum},
             {"target", c.target}});
  if (cfg_.composition_enabled(Composition::CuriosityIntegrate)) {
    reflect_models("integrate_curiosity",
                   ojson{{"trigger_seq", c.trigger_seq},
                         {"new_entries", store_.transitions().size() - c.model_size}});
  }
}

std::optional<std::pair<Action, SaKey>> Engine::curiosity_action() {
  // Prefer the least-visited pairs of the decile; walk the twin to the
  // nearest one.
  int least = std::numeric_limits<int>::max();
  for (const auto& k : curiosity_->decile) {
    if (!intervened_.contains(k)) least = std::min(least, visits_.get(k.first, k.second));
  }
  std::set<SaKey> targets;
  for (const auto& k : curiosity_->decile) {
    if (!intervened_.contains(k) && visits_.get(k.first, k.second) == least) targets.insert(k);
  }
  const GridSpec& g = world_.grid();
  struct Node {
    WorldState s;
    std::optional<Action> first;
  };
  // Only targets reachable before the episode ends count.
  std::set<StateKey> seen{world_.key(state_)};
  std::deque<Node> frontier{{state_, std::nullopt}};
  while (!frontier.empty()) {
    Node n = std::move(frontier.front());
    frontier.pop_front();
    if (n.s.terminal) continue;
    const StateKey k = world_.key(n.s);
    for (Action a : kActions) {
      if (targets.contains({k, a})) return std::pair{n.first.value_or(a), SaKey{k, a}};
    }
    for (Action a : kActions) {
      if (intervened_.contains({k, a})) continue;
      WorldState next = step_world(g, n.s, a).first;
      if (!seen.insert(world_.key(next)).second) continue;
      frontier.push_back({next, n.first.value_or(a)});
    }
  }
  return std::nullopt;
}

void Engine::activate_composition(Composition c) {
  if (!members_enabled(c, tier_)) {
    throw MembersDisabled("composition " + std::string(to_string(c)) + " needs loops not enabled at tier " +
                          std::to_string(tier_.tier));
  }
  switch (c) {
    case Composition::Curiosity:
    case Composition::CuriosityIntegrate:
      if (!curiosity_) start_curiosity(last_progress_seq_);
      break;
    case Composition::GovernanceReflection:
      emit(LoopId::L8, std::nullopt, "governance_review",
           ojson{{"verdict_seqs", open_verdicts_}, {"reviewed", open_verdicts_.size()}});
      open_verdicts_.clear();
      break;
    case Composition::DeliberativeDirection:
      emit(LoopId::L8, std::nullopt, "deliberate_direction",
           ojson{{"progress_seq", last_progress_seq_}, {"verdict_seqs", open_verdicts_}, {"chosen", "explore"}});
      break;
  }
}

}  // namespace reflect
