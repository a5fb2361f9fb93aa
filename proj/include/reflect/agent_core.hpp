#pragma once

// Operational critic agent: performance element (select_action), critic
// (criticize), learning element (Policy::learn) and problem generator
// (propose_exploration).

#include <array>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "reflect/core.hpp"
#include "reflect/models.hpp"
#include "reflect/world.hpp"

namespace reflect {

struct PerformanceStandard {
  std::map<std::string, double> weights;

  static PerformanceStandard from_goals(const GoalStore& goals);
  /// All referenced goal ids must exist in `goals`.
  bool consistent_with(const GoalStore& goals) const;
};

struct Feedback {
  double scalar = 0.0;
  std::map<std::string, double> components;
  long step = 0;
};

/// Per-step critic input besides the percept.
struct CriticContext {
  int interventions = 0;  // governance blocks scored under Loop 5 wiring
  bool novel = false;     // executed (state, action) never tried before
  long step = 0;
};

/// Components: task_reward = rewards - hazard penalties, sanction_penalty =
/// -sum of severities, harm_to_other = -1 per HarmEvent, intervention = -1 per
/// block (weight 1 unless set), exploration_bonus = +1 for a novel pair when
/// that goal exists. A component is only produced when its events occur.
/// Throws UnknownGoalId when an occurring component has no weight.
Feedback criticize(const Percept& percept, const PerformanceStandard& standard, const CriticContext& ctx = {});

enum class StrategyId : std::uint8_t { QTable, ModelBasedPlanner };
std::string_view to_string(StrategyId s);
StrategyId parse_strategy(std::string_view s);  // throws UnknownStrategy

struct PolicyConfig {
  StrategyId strategy = StrategyId::QTable;
  double alpha = 0.5;
  double gamma = 0.9;
  double epsilon = 0.1;
  int planning_horizon = 1;

  void validate() const;  // throws ConfigError
};

class Policy {
 public:
  explicit Policy(PolicyConfig cfg = {});

  StrategyId strategy() const { return cfg_.strategy; }
  const PolicyConfig& config() const { return cfg_; }

  /// Q-values (QTable) or lookahead values on the planner's own model
  /// (ModelBasedPlanner), in kActions order.
  std::array<double, kActionCount> action_values(const StateKey& s) const;
  /// argmax with ties broken by kActions order.
  Action greedy(const StateKey& s) const;
  double q(const StateKey& s, Action a) const;

  /// QTable: Q += alpha (r + gamma max Q(next) - Q), bootstrap skipped for
  /// absorbing ends. Planner: update its model, then one bounded value
  /// iteration sweep over the states visited this episode.
  void learn(const Feedback& fb, const StateKey& s, Action a, const StateKey& next, bool absorbing);
  void end_episode();

  /// Replaces the strategy; hyperparameters and tables of the other strategy
  /// are kept so a later switch back resumes them.
  void switch_to(StrategyId id);

  /// Number of (state, action) entries the active strategy holds.
  std::size_t table_size() const;

  std::string checkpoint() const;
  std::uint64_t hash() const;
  static Policy from_checkpoint(std::string_view text);

  void set_q(const StateKey& s, Action a, double v) { q_[s][index_of(a)] = v; }

 private:
  double lookahead(const StateKey& s, Action a, int depth) const;
  double state_value(const StateKey& s) const;

  PolicyConfig cfg_;
  std::map<StateKey, std::array<double, kActionCount>> q_;

  struct RewardStat {
    double mean = 0.0;
    int n = 0;
  };
  std::map<StateKey, double> value_;
  TransitionModel model_;
  std::map<SaKey, RewardStat> reward_;
  std::map<SaKey, bool> absorbing_;
  std::vector<StateKey> episode_states_;
};

inline constexpr std::size_t kPlannerSweepBudget = 256;

/// Uniform double in [0, 1) from a 64-bit engine, portable across standard
/// library implementations.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

struct Selection {
  Action action = Action::Wait;
  bool explored = false;
};

/// Epsilon-greedy. Always consumes exactly two draws so the random stream is
/// independent of table contents.
Selection select_action(const StateKey& s, const Policy& policy, std::mt19937_64& rng);

class VisitCounts {
 public:
  void add(const StateKey& s, Action a, int n = 1) { counts_[{s, a}] += n; }
  int get(const StateKey& s, Action a) const {
    auto it = counts_.find({s, a});
    return it == counts_.end() ? 0 : it->second;
  }
  const std::map<SaKey, int>& all() const { return counts_; }
  std::size_t size() const { return counts_.size(); }

 private:
  std::map<SaKey, int> counts_;
};

/// Actions by ascending visit count, ties in kActions order. Never empty.
std::vector<Action> propose_exploration(const StateKey& s, const VisitCounts& counts);

}  // namespace reflect
