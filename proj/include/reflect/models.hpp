#pragma once

// Reflective model store: the raw observation log and the tabular models
// conceptualised from it (self transitions, other agents, norms, goals, rule
// re-representation), with immutable versioned snapshots.

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "reflect/core.hpp"
#include "reflect/norms.hpp"
#include "reflect/world.hpp"

namespace reflect {

struct Observation {
  int episode = 0;
  long tick = 0;  // global step counter of the run
  Transition transition;
  std::vector<StepEvent> events;

  int step() const { return transition.prev.step; }
};

class ObservationLog {
 public:
  explicit ObservationLog(std::size_t capacity = 0) : capacity_(capacity) {}

  /// Steps must be consecutive within an episode; a larger episode number
  /// starts a new run of steps. Throws OutOfOrder otherwise.
  void record(Observation obs);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t capacity() const { return capacity_; }
  const Observation& operator[](std::size_t i) const { return entries_[i]; }
  const Observation& back() const { return entries_.back(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  std::uint64_t total_recorded() const { return total_; }

 private:
  std::size_t capacity_;
  std::deque<Observation> entries_;
  std::uint64_t total_ = 0;
};

using SaKey = std::pair<StateKey, Action>;

class TransitionModel {
 public:
  struct Entry {
    StateKey next;
    int visits = 0;
    bool terminal = false;
  };
  enum class Outcome { Inserted, Confirmed, Corrected };
  struct RecordResult {
    Outcome outcome;
    std::optional<StateKey> previous;  // stale successor on Corrected
  };

  std::optional<StateKey> predict(const StateKey& s, Action a) const;
  const Entry* find(const StateKey& s, Action a) const;
  int visits(const StateKey& s, Action a) const;

  /// Records (s, a) -> next. A different successor for a known key replaces
  /// the stale entry and reports Corrected.
  RecordResult record(const StateKey& s, Action a, const StateKey& next, bool terminal);
  /// As record(), but a contradiction throws ModelConflict instead.
  RecordResult record_strict(const StateKey& s, Action a, const StateKey& next, bool terminal);
  /// Overwrites an entry without bookkeeping (used to inject anomalies in tests).
  void set(const StateKey& s, Action a, const StateKey& next, bool terminal = false);

  std::size_t size() const { return table_.size(); }
  bool empty() const { return table_.empty(); }
  const std::map<SaKey, Entry>& table() const { return table_; }
  bool operator==(const TransitionModel&) const;

 private:
  std::map<SaKey, Entry> table_;
};

class OtherAgentModel {
 public:
  struct Entry {
    Coord next;  // kRemoved when the NPC vanished (entered a hazard)
    int visits = 0;
  };

  std::optional<Coord> predict(const std::string& npc, Coord at) const;
  /// Returns true when an existing prediction was corrected.
  bool record(const std::string& npc, Coord from, Coord to);

  const std::map<std::string, std::map<Coord, Entry>>& table() const { return table_; }
  std::size_t size() const;
  bool operator==(const OtherAgentModel&) const;

 private:
  std::map<std::string, std::map<Coord, Entry>> table_;
};

/// Evidence kept for one candidate prohibition.
struct NormHypothesis {
  Predicate predicate;
  int support = 0;
  int counterexamples = 0;
  double penalty_sum = 0.0;
  bool promoted = false;
  std::string norm_id;  // id of the promoted norm
  std::optional<long> first_support_step;
  long last_counterexample_tick = -1;
};

class NormModel {
 public:
  /// Inserts a norm; returns false (and changes nothing) on a duplicate id.
  bool add(NormSpec n);
  bool remove(const std::string& id);
  const NormSpec* find(const std::string& id) const;
  const std::vector<NormSpec>& norms() const { return norms_; }
  std::vector<NormHypothesis>& hypotheses() { return hypotheses_; }
  const std::vector<NormHypothesis>& hypotheses() const { return hypotheses_; }
  void set_hypothesis_space(std::vector<Predicate> space);

 private:
  std::vector<NormSpec> norms_;
  std::vector<NormHypothesis> hypotheses_;
};

enum class GoalSource : std::uint8_t { Design, Environment, Reflection };
std::string_view to_string(GoalSource s);

struct Goal {
  std::string description;
  double weight = 0.0;
  GoalSource source = GoalSource::Design;
};

struct GoalRevision {
  long step = 0;
  std::string goal_id;
  std::optional<double> old_weight;
  double new_weight = 0.0;
  GoalSource source = GoalSource::Design;
};

/// Goal ids understood by the critic.
inline constexpr std::array<std::string_view, 5> kKnownGoals{"task_reward", "sanction_penalty", "harm_to_other",
                                                            "intervention", "exploration_bonus"};
bool is_known_goal(std::string_view id);

class GoalStore {
 public:
  /// Sets a goal weight and appends a revision. Throws UnknownGoalSchema for
  /// ids outside kKnownGoals or non-finite weights.
  void set(const std::string& id, double weight, GoalSource source, long step, std::string description = {});
  std::optional<double> weight(const std::string& id) const;
  const std::map<std::string, Goal>& goals() const { return goals_; }
  const std::vector<GoalRevision>& history() const { return history_; }

 private:
  std::map<std::string, Goal> goals_;
  std::vector<GoalRevision> history_;
};

/// Cell-property guard over the static layout and the key's NPC positions.
struct Guard {
  enum class Kind : std::uint8_t { Always, TargetType, SourceType } kind = Kind::Always;
  CellType type = CellType::Empty;
  auto operator<=>(const Guard&) const = default;
  bool operator==(const Guard&) const = default;
  std::string str() const;
};

/// Step(d): attempt displacement d, stay when the target is off-grid, a wall
/// or holds a live NPC. NoMove: stay.
struct Effect {
  enum class Kind : std::uint8_t { Step, NoMove } kind = Effect::Kind::NoMove;
  Coord delta;
  auto operator<=>(const Effect&) const = default;
  bool operator==(const Effect&) const = default;
  std::string str() const;
};

struct Rule {
  Guard guard;
  Action action = Action::Wait;
  Effect effect;
  bool operator==(const Rule&) const = default;
};

/// Predicts the agent's next cell. Exceptions win over rules; among rules the
/// first match wins. No match yields no prediction.
struct RuleSetModel {
  std::vector<Rule> rules;
  std::map<SaKey, Coord> exceptions;

  bool guard_holds(const Guard& g, const GridSpec& grid, const StateKey& s, Action a) const;
  Coord apply(const Effect& e, const GridSpec& grid, const StateKey& s) const;
  std::optional<Coord> predict(const GridSpec& grid, const StateKey& s, Action a) const;
};

/// Immutable view of every model at one version.
struct ModelSnapshot {
  std::uint64_t version = 0;
  std::shared_ptr<const ObservationLog> log;
  std::shared_ptr<const TransitionModel> transitions;
  std::shared_ptr<const OtherAgentModel> others;
  std::shared_ptr<const NormModel> norms;
  std::shared_ptr<const GoalStore> goals;
  std::shared_ptr<const RuleSetModel> rules;  // null until first re-representation
};

/// Single-writer store. Mutators copy-on-write so outstanding snapshots never
/// observe later changes; every mutating access bumps the version.
class ModelStore {
 public:
  explicit ModelStore(std::size_t log_capacity = 0);

  std::shared_ptr<const ModelSnapshot> snapshot() const;
  std::uint64_t version() const { return version_; }

  const ObservationLog& log() const { return *log_; }
  const TransitionModel& transitions() const { return *transitions_; }
  const OtherAgentModel& others() const { return *others_; }
  const NormModel& norms() const { return *norms_; }
  const GoalStore& goals() const { return *goals_; }
  const RuleSetModel* rules() const { return rules_.get(); }

  void record(Observation obs);
  ObservationLog& mutable_log();
  TransitionModel& mutable_transitions();
  OtherAgentModel& mutable_others();
  NormModel& mutable_norms();
  GoalStore& mutable_goals();
  RuleSetModel& mutable_rules();

 private:
  template <class T>
  T& cow(std::shared_ptr<const T>& p);

  std::uint64_t version_ = 0;
  std::shared_ptr<const ObservationLog> log_;
  std::shared_ptr<const TransitionModel> transitions_;
  std::shared_ptr<const OtherAgentModel> others_;
  std::shared_ptr<const NormModel> norms_;
  std::shared_ptr<const GoalStore> goals_;
  std::shared_ptr<const RuleSetModel> rules_;
};

}  // namespace reflect
