#pragma once

// Consequence engine: simulates candidate plans in the twin or in the learned
// models without touching the world, and evaluates norms and goals on the
// predicted transitions.

#include <map>
#include <span>
#include <string>
#include <vector>

#include "reflect/models.hpp"
#include "reflect/world.hpp"

namespace reflect {

enum class Basis : std::uint8_t { Twin, LearnedModels };
std::string_view to_string(Basis b);

struct Violation {
  std::string norm_id;
  int step = 0;  // 1-based index into the trajectory
  double severity = 0.0;
  bool operator==(const Violation&) const = default;
};

struct PredictedStep {
  Action action = Action::Wait;
  WorldState state;
  std::vector<StepEvent> events;  // ground-truth sanctions are never included
  std::vector<Violation> violations;
};

struct Rollout {
  std::vector<Action> plan;  // padded with Wait up to the horizon
  int horizon = 0;
  std::vector<PredictedStep> trajectory;
  std::vector<Violation> violations;  // prohibitions, in trajectory order
  int harms = 0;
  int obligation_entries = 0;  // NPC entries counted against obligations
  std::map<std::string, int> entries_by_obligation;
  double obligation_cost = 0.0;
  double rewards = 0.0;
  double hazard_penalty = 0.0;
  Basis basis = Basis::Twin;
  double confidence = 1.0;

  /// Prohibition severities plus severity-weighted obligation entries.
  double norm_cost() const;
};

/// Pure; never mutates `world` or `s`. Throws EmptyPlan on an empty plan and
/// ConfigError when horizon < |plan|.
Rollout rollout(const World& world, const ModelSnapshot& snap, const WorldState& s, std::span<const Action> plan,
                int horizon, Basis basis, const TwinConfig& twin = {});

enum class HypothesisStatus : std::uint8_t { Untested, Supported, Refuted };
std::string_view to_string(HypothesisStatus s);

struct Hypothesis {
  std::string id;
  std::vector<Action> plan;
  double value = 0.0;
  double norm_cost = 0.0;
  HypothesisStatus status = HypothesisStatus::Untested;
  std::string generator;
};

/// Goal-weighted value of a rollout: task reward (net of hazard penalties)
/// and harm to others, weighted by the snapshot's goal store.
double rollout_value(const Rollout& r, const ModelSnapshot& snap);

/// Evaluates every hypothesis and ranks by (norm_cost asc, value desc, plan
/// lexicographic). Ties beyond that keep input order.
std::vector<Hypothesis> test_hypotheses(std::vector<Hypothesis> hs, const World& world, const ModelSnapshot& snap,
                                        const WorldState& s, int horizon, Basis basis = Basis::Twin,
                                        const TwinConfig& twin = {});

/// Ranking order used by test_hypotheses.
bool ranks_before(const Hypothesis& a, const Hypothesis& b);

}  // namespace reflect
