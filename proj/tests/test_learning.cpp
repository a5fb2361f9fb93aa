#include "support.hpp"

#include <algorithm>

using namespace reflect;
using reflect::test::observe_plan;

namespace {

constexpr Action N = Action::North, S = Action::South, E = Action::East, W = Action::West, X = Action::Wait;

struct Evidence {
  int support = 0;
  int counterexamples = 0;
};

// Brute force over every template instance: support on sanctioned
// transitions, counterexamples on clean ones.
std::map<std::string, Evidence> tally(const GridSpec& g, const std::vector<Observation>& log) {
  std::map<std::string, Evidence> out;
  for (const auto& p : enumerate_hypotheses(g, InferenceConfig{})) {
    Evidence e;
    for (const auto& o : log) {
      if (!holds(p, g, o.transition)) continue;
      const bool sanctioned = std::any_of(o.events.begin(), o.events.end(),
                                          [](const StepEvent& ev) { return std::holds_alternative<SanctionEvent>(ev); });
      (sanctioned ? e.support : e.counterexamples)++;
    }
    out[p.str()] = e;
  }
  return out;
}

std::set<std::string> oracle_promoted(const GridSpec& g, const std::vector<Observation>& log, int s_min) {
  std::set<std::string> out;
  for (const auto& [id, e] : tally(g, log)) {
    if (e.support >= s_min && e.counterexamples == 0) out.insert(id);
  }
  return out;
}

std::set<std::string> promoted(const NormModel& m) {
  std::set<std::string> out;
  for (const auto& n : m.norms()) {
    if (n.source == NormSource::Inferred) out.insert(n.predicate.str());
  }
  return out;
}

NormModel fresh_model(const GridSpec& g) {
  NormModel m;
  m.set_hypothesis_space(enumerate_hypotheses(g, InferenceConfig{}));
  return m;
}

const char* kZoneField = R"([scenario]
episode_steps = 100
[grid]
.....
..A..
.....
[zones]
Z1 = cells 2,2
[norms]
P1 = prohibition agent_in_zone(Z1) severity=2 disclosure=hidden
)";

std::vector<Observation> zone_log(const World& w, int sanctions) {
  WorldState s = w.initial_state();
  long tick = 0;
  std::vector<Action> plan;
  for (int i = 0; i < sanctions; ++i) {
    plan.push_back(N);
    plan.push_back(S);
  }
  for (int i = 0; i < 10; ++i) plan.insert(plan.end(), {E, S, W, N});  // never re-enters Z1
  return observe_plan(w, s, plan, tick);
}

}  // namespace

TEST(Kolb, FixedFourPhaseCycle) {
  EXPECT_EQ(kolb_tick(KolbPhase::ConcreteExperience), KolbPhase::ReflectiveObservation);
  KolbPhase p = KolbPhase::AbstractConceptualisation;
  for (int i = 0; i < 4; ++i) p = kolb_tick(p);
  EXPECT_EQ(p, KolbPhase::AbstractConceptualisation);
  EXPECT_EQ(parse_kolb_phase(to_string(KolbPhase::ActiveExperimentation)), KolbPhase::ActiveExperimentation);
}

TEST(LearnTransitions, TabulatesObservedMoves) {
  const auto g = reflect::test::grid_of(reflect::test::open_grid(4, 4, {1, 1}));
  World w(g);
  WorldState s = w.initial_state();
  long tick = 0;
  const auto log = observe_plan(w, s, {E}, tick);
  TransitionModel m;
  const auto r = learn_transitions(log, m);
  EXPECT_EQ(r.inserted, 1);
  EXPECT_EQ(m.predict(StateKey{{1, 1}, {}, 0}, E), (StateKey{{2, 1}, {}, 0}));
  EXPECT_FALSE(m.predict(StateKey{{1, 1}, {}, 0}, W).has_value());
}

TEST(LearnTransitions, HotSwapProducesACorrection) {
  const auto open = reflect::test::grid_of(reflect::test::open_grid(3, 3, {1, 1}));
  const auto walled = reflect::test::grid_of("[scenario]\n[grid]\n...\n.A#\n...\n");
  TransitionModel m;
  long tick = 0;
  WorldState s = World(open).initial_state();
  learn_transitions(observe_plan(World(open), s, {E}, tick), m);
  s = World(walled).initial_state();
  const auto r = learn_transitions(observe_plan(World(walled), s, {E}, tick), m);
  ASSERT_EQ(r.corrections.size(), 1u);
  EXPECT_EQ(r.corrections[0].stale.agent, (Coord{2, 1}));
  EXPECT_EQ(m.predict(StateKey{{1, 1}, {}, 0}, E)->agent, (Coord{1, 1}));
}

TEST(LearnTransitions, FoldOverDeltasEqualsFoldOverTheWholeLog) {
  const auto sc = Scenario::load(reflect::test::scenario_path("corridor-rescue"));
  reflect::test::Rig rig(sc, 2, 3);
  rig.engine.run(400);
  const auto& log = rig.engine.models().log();
  const std::vector<Observation> all(log.begin(), log.end());
  TransitionModel whole, pieces;
  OtherAgentModel other_whole, other_pieces;
  learn_transitions(all, whole);
  learn_other(all, other_whole, *sc.grid);
  for (std::size_t i = 0; i < all.size(); i += 37) {
    const std::span<const Observation> delta(all.data() + i, std::min<std::size_t>(37, all.size() - i));
    learn_transitions(delta, pieces);
    learn_other(delta, other_pieces, *sc.grid);
  }
  EXPECT_EQ(whole, pieces);
  EXPECT_EQ(other_whole, other_pieces);
  // The engine's own models are the same fold.
  EXPECT_EQ(whole, rig.engine.models().transitions());
  EXPECT_EQ(other_whole, rig.engine.models().others());
}

TEST(LearnOther, OneLapMatchesTheScript) {
  const auto sc = reflect::test::scenario(R"([scenario]
[grid]
A....
.12..
.....
[npcs]
1 = path 1,1 1,0 2,0 2,1 loop=true
2 = path 2,1 3,1
)");
  const auto& g = *sc.grid;
  World w(sc.grid);
  WorldState s = w.initial_state();
  long tick = 0;
  OtherAgentModel m;
  learn_other(observe_plan(w, s, std::vector<Action>(6, X), tick), m, g);
  const auto& path = g.npcs[0].path;
  for (std::size_t i = 0; i < path.size(); ++i) {
    EXPECT_EQ(m.predict("1", path[i]), path[(i + 1) % path.size()]) << i;
  }
  EXPECT_EQ(m.predict("2", {2, 1}), (Coord{3, 1}));
  EXPECT_FALSE(m.predict("2", {0, 0}).has_value());
}

TEST(InferNorms, ThreeSanctionsPromoteTheUniqueZoneNorm) {
  const auto g = reflect::test::grid_of(kZoneField);
  World w(g);
  const auto log = zone_log(w, 3);
  NormModel m = fresh_model(*g);
  infer_norms(log, m, InferenceConfig{}, *g);
  const auto oracle = oracle_promoted(*g, log, 3);
  EXPECT_EQ(oracle, std::set<std::string>{"agent_in_zone(Z1)"});
  EXPECT_EQ(promoted(m), oracle);
  const auto* n = m.find(inferred_norm_id(Predicate::parse("agent_in_zone(Z1)")));
  ASSERT_NE(n, nullptr);
  EXPECT_DOUBLE_EQ(n->severity, 2.0);
  EXPECT_EQ(n->kind, NormKind::Prohibition);
}

TEST(InferNorms, TwoSanctionsAreNotEnough) {
  const auto g = reflect::test::grid_of(kZoneField);
  World w(g);
  NormModel m = fresh_model(*g);
  infer_norms(zone_log(w, 2), m, InferenceConfig{}, *g);
  EXPECT_TRUE(promoted(m).empty());
}

TEST(InferNorms, LaterCleanHazardEntryLeavesOnlyTheZone) {
  const auto g = reflect::test::grid_of(R"([scenario]
episode_steps = 100
[grid]
.h...
..A.h
.....
[zones]
Z1 = cells 1,2 2,2
[norms]
P1 = prohibition agent_in_zone(Z1) severity=4 disclosure=hidden
)");
  World w(g);
  std::vector<Observation> log;
  long tick = 0;
  WorldState s = w.initial_state();
  NormModel m = fresh_model(*g);
  std::vector<std::size_t> marks;
  for (int ep = 0; ep < 3; ++ep) {
    auto part = observe_plan(w, s, {S, W, N, N}, tick);  // hazard (1,2) lies inside Z1
    log.insert(log.end(), part.begin(), part.end());
    s = w.next_episode(s);
  }
  const auto tally_mid = tally(*g, log);
  EXPECT_EQ(tally_mid.at("agent_in_zone(Z1)").support, 3);
  EXPECT_EQ(tally_mid.at("agent_enters(hazard)").support, 3);
  auto part = observe_plan(w, s, {S, E, E, N, W, W, W, E, E, E, N, E, E}, tick);
  log.insert(log.end(), part.begin(), part.end());
  ASSERT_TRUE(s.terminal);
  // Feed in two deltas so the hazard norm is promoted first, then demoted.
  const std::size_t split = 12;
  const auto first = infer_norms(std::span(log.data(), split), m, InferenceConfig{}, *g);
  EXPECT_TRUE(promoted(m).contains("agent_enters(hazard)"));
  const auto second = infer_norms(std::span(log.data() + split, log.size() - split), m, InferenceConfig{}, *g);
  const auto oracle = oracle_promoted(*g, log, 3);
  EXPECT_EQ(oracle, std::set<std::string>{"agent_in_zone(Z1)"});
  EXPECT_EQ(promoted(m), oracle);
  const bool demoted_hazard = std::any_of(second.changes.begin(), second.changes.end(), [](const NormChange& c) {
    return c.kind == NormChange::Kind::Demoted && c.norm.predicate.str() == "agent_enters(hazard)";
  });
  EXPECT_TRUE(demoted_hazard);
}

TEST(InferNorms, SoundAgainstTheFullLogOnSeededRuns) {
  for (const char* name : {"sanction-school", "signpost", "forbidden-field"}) {
    const auto sc = Scenario::load(reflect::test::scenario_path(name));
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      reflect::test::Rig rig(sc, 2, seed);
      rig.engine.run(1500);
      const auto& log = rig.engine.models().log();
      const auto ev = tally(*sc.grid, std::vector<Observation>(log.begin(), log.end()));
      for (const auto& n : rig.engine.models().norms().norms()) {
        if (n.source != NormSource::Inferred) continue;
        const auto& e = ev.at(n.predicate.str());
        EXPECT_GE(e.support, sc.engine.inference.s_min) << name << " " << n.id;
        EXPECT_EQ(e.counterexamples, 0) << name << " " << n.id;
      }
    }
  }
}

TEST(InferNorms, WindowForgetsOldCounterexamples) {
  const auto g = reflect::test::grid_of(kZoneField);
  World w(g);
  WorldState s = w.initial_state();
  long tick = 0;
  // step_exceeds(0) holds on every transition: six clean ones, then three
  // sanctioned ones inside Z1.
  auto log = observe_plan(w, s, {E, W, W, E, E, W, N, X, X}, tick);
  InferenceConfig cfg;
  cfg.templates_enabled = {Template::StepCountExceeds};
  NormModel strict = fresh_model(*g);
  infer_norms(log, strict, cfg, *g);
  EXPECT_FALSE(promoted(strict).contains("step_exceeds(0)"));
  cfg.window = 2;
  NormModel windowed = fresh_model(*g);
  infer_norms(log, windowed, cfg, *g);
  EXPECT_TRUE(promoted(windowed).contains("step_exceeds(0)"));
}

TEST(InferNorms, ConfigValidation) {
  InferenceConfig cfg;
  cfg.s_min = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.s_min = 1;
  cfg.templates_enabled.insert(Template::PreventOtherEntering);
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(IntegrateSign, InsertsOnceAsEnvironmentNorm) {
  NormModel norms;
  GoalStore goals;
  SignPerceived sign{NormSpec::parse("P2:prohibition:agent_in_zone(Z):5"), {0, 0}, GoalWeight{"sanction_penalty", 2}};
  EXPECT_TRUE(integrate_sign(norms, goals, sign, 57));
  EXPECT_FALSE(integrate_sign(norms, goals, sign, 60));
  ASSERT_EQ(norms.norms().size(), 1u);
  EXPECT_EQ(norms.norms()[0].source, NormSource::Environment);
  EXPECT_EQ(goals.history().size(), 1u);
  EXPECT_EQ(goals.history()[0].step, 57);
}

TEST(IntegrateDesignGoal, NormsAndWeights) {
  ModelStore store;
  store.mutable_goals().set("task_reward", 1.0, GoalSource::Design, 0);
  integrate_design_goal(store, NormSpec::parse("P3:prohibition:agent_in_zone(Z):3"), 100);
  EXPECT_EQ(store.norms().find("P3")->source, NormSource::Design);
  integrate_design_goal(store, GoalWeight{"task_reward", 2.0}, 100);
  EXPECT_EQ(store.goals().weight("task_reward"), 2.0);
  EXPECT_EQ(store.goals().history().size(), 2u);
  NormSpec bad = NormSpec::parse("P4:prohibition:agent_in_zone(Z):3");
  bad.severity = -1;
  EXPECT_THROW(integrate_design_goal(store, bad, 101), UnknownGoalSchema);
  EXPECT_THROW(integrate_design_goal(store, GoalWeight{"fun", 1.0}, 101), UnknownGoalSchema);
}
