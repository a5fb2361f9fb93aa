#pragma once

// Reflective reasoning and behaviour governance: what-if queries, the action
// governor, diverse deliberation, progress and learning introspection, and
// re-representation of the transition model as rules.

#include <optional>
#include <string>
#include <vector>

#include "reflect/agent_core.hpp"
#include "reflect/consequence.hpp"

namespace reflect {

struct WhatIf {
  Rollout rollout;
  double norm_cost = 0.0;
};

/// Rollout of [a] padded with Wait to `horizon`. Pure.
WhatIf what_if(const World& world, const WorldState& s, Action a, const ModelSnapshot& snap, int horizon = 1,
               Basis basis = Basis::Twin, const TwinConfig& twin = {});

struct GovernorConfig {
  Basis basis = Basis::Twin;
  TwinConfig twin;
  /// Optional tie-break among equally costed candidates (higher first),
  /// typically the policy's action values.
  std::optional<std::array<double, kActionCount>> preference;
};

struct CandidateCost {
  Action action = Action::Wait;
  double prohibition = 0.0;
  double obligation = 0.0;
  double value = 0.0;
  std::vector<Violation> violations;  // prohibitions and obligation breaches
  double cost() const { return prohibition + obligation; }
};

struct Verdict {
  enum class Kind : std::uint8_t { Allow, Block, Compromise } kind = Kind::Allow;
  Action intended = Action::Wait;
  std::vector<Violation> violations;  // cited norms for Block
  std::optional<Action> suggestion;   // Block only
  Action chosen = Action::Wait;       // Compromise only
  double residual_cost = 0.0;         // Compromise only
  std::vector<CandidateCost> candidates;

  /// The action that is actually executed.
  Action executed() const;
};
std::string_view to_string(Verdict::Kind k);

/// Costs all five actions. Prohibitions are evaluated on the first predicted
/// transition. A PreventOtherEntering(kind, h) obligation costs each action
/// severity * (entries(a) - min entries) over an h-step rollout of the action
/// followed by Waits, whenever some candidate predicts an entry and another
/// predicts fewer.
std::vector<CandidateCost> cost_candidates(const World& world, const WorldState& s, const ModelSnapshot& snap,
                                           const GovernorConfig& cfg);

/// Allow when the intended action is clean; otherwise Block with the best
/// clean suggestion, or Compromise on the least costly action when nothing is
/// clean.
Verdict vet(const World& world, const WorldState& s, Action intended, const ModelSnapshot& snap,
            const GovernorConfig& cfg = {});

struct DeliberationInput {
  const Policy* policy = nullptr;
  const VisitCounts* visits = nullptr;
  int k = 3;
  int horizon = 5;
  Basis basis = Basis::Twin;
  TwinConfig twin;
};

/// Candidate plans from distinct generators (disengage, greedy, exploration
/// variants, learned-model planner), deduplicated and ranked. Always contains
/// the all-Wait disengage plan. Throws ConfigError when k < 2.
std::vector<Hypothesis> deliberate(const World& world, const WorldState& s, const ModelSnapshot& snap,
                                   const DeliberationInput& in);

/// Shortest plan in the learned model from `from` to a transition that
/// collects a reward; empty when none is known.
std::vector<Action> plan_to_reward(const TransitionModel& model, const GridSpec& grid, const StateKey& from,
                                   std::size_t max_depth);

struct ProgressReport {
  bool stuck = false;
  int window = 0;
  double improvement = 0.0;
  std::optional<GoalRevision> suggestion;
};

/// improvement = max(last W) - max(the up to W returns before them). Needs
/// at least W + 1 returns (InsufficientHistory otherwise).
ProgressReport assess_progress(std::span<const double> returns, int window, double epsilon,
                               const GoalStore* goals = nullptr, long step = 0, double bonus_weight = 0.5);

struct LearningStats {
  const VisitCounts* visits = nullptr;
  std::size_t reachable_pairs = 0;
  const std::vector<SaKey>* reachable = nullptr;
  int predictions = 0;
  int correct_predictions = 0;
};

struct LearnerReport {
  StrategyId strategy = StrategyId::QTable;
  PolicyConfig hyperparameters;
  double coverage = 0.0;
  double prediction_accuracy = 0.0;
  std::size_t visited_pairs = 0;
  std::size_t reachable_pairs = 0;
};

LearnerReport introspect_learning(const Policy& policy, const LearningStats& stats);

/// (state, action) pairs some episode from `start` can reach before its time limit.
/// Terminal states contribute no pairs. Stops after `cap` states.
std::vector<SaKey> reachable_pairs(const World& world, const WorldState& start, std::size_t cap = 200000);

/// Throws UnknownStrategy for an unregistered id.
void switch_strategy(Policy& policy, std::string_view target);

enum class Resolution : std::uint8_t { TrustEmpirical, Unresolved };
std::string_view to_string(Resolution r);

struct Inconsistency {
  SaKey key;
  std::optional<Coord> tabular;
  std::optional<Coord> rules;
  Resolution resolution = Resolution::Unresolved;
};

/// Greedy per-action rule induction over cell-property guards; entries no
/// rule explains become exceptions. Throws EmptyModel.
RuleSetModel re_represent(const TransitionModel& model, const GridSpec& grid);

/// Every tabular key whose agent prediction differs from the rule set. With
/// `resolve`, each is fixed by an exception that trusts the tabular model.
std::vector<Inconsistency> reconcile(const TransitionModel& a, RuleSetModel& b, const GridSpec& grid,
                                     bool resolve = true);

}  // namespace reflect
