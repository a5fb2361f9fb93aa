#pragma once

// Reflective learning: online learners that conceptualise observations into
// the transition, other-agent and norm models, the runtime integration of
// signs and design goals, and the Kolb cycle driver.

#include <set>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "reflect/models.hpp"

namespace reflect {

enum class KolbPhase : std::uint8_t {
  ConcreteExperience,
  ReflectiveObservation,
  AbstractConceptualisation,
  ActiveExperimentation,
};

std::string_view to_string(KolbPhase p);
std::optional<KolbPhase> parse_kolb_phase(std::string_view s);

/// Fixed cycle: CE -> RO -> AC -> AE -> CE.
constexpr KolbPhase kolb_tick(KolbPhase p) {
  switch (p) {
    case KolbPhase::ConcreteExperience: return KolbPhase::ReflectiveObservation;
    case KolbPhase::ReflectiveObservation: return KolbPhase::AbstractConceptualisation;
    case KolbPhase::AbstractConceptualisation: return KolbPhase::ActiveExperimentation;
    case KolbPhase::ActiveExperimentation: return KolbPhase::ConcreteExperience;
  }
  return KolbPhase::ConcreteExperience;
}

struct InferenceConfig {
  int s_min = 3;
  /// Counterexample horizon in ticks; 0 keeps every counterexample, which is
  /// what makes promotions sound against the full log.
  int window = 0;
  std::set<Template> templates_enabled{Template::AgentInZone, Template::AgentEntersCellKind,
                                       Template::OtherEntersCellKind, Template::StepCountExceeds};
  void validate() const;  // throws ConfigError
};

struct Correction {
  StateKey state;
  Action action = Action::Wait;
  StateKey stale;
  StateKey fresh;
};

struct TransitionLearnReport {
  int inserted = 0;
  int confirmed = 0;
  std::vector<Correction> corrections;
};

/// O(|delta|) fold of observations into the transition table. Contradictions
/// replace the stale successor and are reported as corrections.
TransitionLearnReport learn_transitions(std::span<const Observation> delta, TransitionModel& model);

struct OtherLearnReport {
  int recorded = 0;
  int corrected = 0;
};

/// Records every unblocked NPC move as a first-order position prediction.
OtherLearnReport learn_other(std::span<const Observation> delta, OtherAgentModel& model, const GridSpec& grid);

/// Every enabled prohibition template instance over the scenario: each zone,
/// each non-wall cell kind (for agent and other entries) and every step
/// threshold below the episode limit.
std::vector<Predicate> enumerate_hypotheses(const GridSpec& grid, const InferenceConfig& cfg);

struct NormChange {
  enum class Kind { Promoted, Demoted } kind = Kind::Promoted;
  NormSpec norm;
  int support = 0;
  int counterexamples = 0;
  long tick = 0;
};

struct InferenceReport {
  int sanctioned = 0;
  int clean = 0;
  std::vector<NormChange> changes;
};

/// Version-space style norm inference. Support counts sanctioned transitions
/// where an instance held; counterexamples count clean transitions where it
/// held. support >= s_min with no counterexample promotes an Inferred norm
/// (severity = mean observed penalty); a later counterexample demotes it.
InferenceReport infer_norms(std::span<const Observation> delta, NormModel& model, const InferenceConfig& cfg,
                            const GridSpec& grid);

/// Id used for the norm promoted from `p`.
std::string inferred_norm_id(const Predicate& p);

/// Inserts the announced norm as an active Environment norm and applies the
/// sign's goal weight. Returns false when the id is already known (no-op).
bool integrate_sign(NormModel& norms, GoalStore& goals, const SignPerceived& sign, long step);

using DesignPayload = std::variant<NormSpec, GoalWeight>;

/// Loop 4 injection. Throws UnknownGoalSchema on an invalid payload.
void integrate_design_goal(ModelStore& store, const DesignPayload& payload, long step);

}  // namespace reflect
