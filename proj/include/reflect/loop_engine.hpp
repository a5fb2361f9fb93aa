#pragma once

// The per-step pipeline wiring the operational core to the reflective loops:
// sense -> learn (L2/L3) -> propose (L5 may substitute) -> vet (L1) ->
// actuate -> critic -> learn -> episodic hooks (L6, L7, L8).

#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "reflect/trace.hpp"

namespace reflect {

/// Scheduled control-channel input.
struct Injection {
  enum class Kind : std::uint8_t { Norm, Goal, Switch } kind = Kind::Norm;
  long step = 0;
  NormSpec norm;
  GoalWeight goal;
  std::string strategy;
  std::string text;  // the control line it came from

  /// "STEP = norm SPEC" | "STEP = goal ID WEIGHT" | "STEP = switch NAME".
  /// Throws ConfigError.
  static Injection parse(std::string_view line);
  std::string str() const;
};

struct ReflectionConfig {
  int window = 5;  // W
  double epsilon = 0.1;
  int schedule = 10;  // L7/L8 every E episodes
  bool self_apply = false;
  int k = 3;
  int horizon = 5;
  long curiosity_budget = 2000;  // steps per curiosity episode
  double bonus_weight = 0.5;
  std::map<Composition, CompositionSwitch> compositions;
};

struct EngineConfig {
  int tier = 0;
  std::uint64_t seed = 0;
  PolicyConfig policy;
  InferenceConfig inference;
  double fidelity = 1.0;
  Basis basis = Basis::Twin;
  std::map<std::string, double> standard{{"task_reward", 1.0}, {"sanction_penalty", 1.0}, {"harm_to_other", 1.0}};
  ReflectionConfig reflection;
  std::vector<Injection> injections;
  std::size_t log_capacity = 0;

  /// ConfigError on a bad tier, an injection the tier cannot receive or a
  /// composition switched on without its member loops.
  void validate() const;
  bool composition_enabled(Composition c) const;
};

/// The ceil(10%) least-visited pairs of `universe`, ties in key order.
std::vector<SaKey> bottom_decile(const std::vector<SaKey>& universe, const VisitCounts& visits);

class Engine {
 public:
  Engine(std::shared_ptr<const GridSpec> grid, EngineConfig cfg, Tracer& tracer);

  void run_step();
  void run(long steps);

  /// Triggers a composition now. Throws MembersDisabled when a member loop
  /// is not enabled at this tier.
  void activate_composition(Composition c);

  const World& world() const { return world_; }
  const WorldState& state() const { return state_; }
  const ModelStore& models() const { return store_; }
  const Policy& policy() const { return policy_; }
  Policy& mutable_policy() { return policy_; }
  const VisitCounts& visits() const { return visits_; }
  const std::vector<double>& returns() const { return returns_; }
  long tick() const { return tick_; }
  const TierConfig& tier() const { return tier_; }
  const EngineConfig& config() const { return cfg_; }
  const std::optional<ProgressReport>& last_progress() const { return last_progress_; }
  const std::optional<LearnerReport>& last_learner() const { return last_learner_; }
  bool curiosity_active() const { return curiosity_.has_value(); }
  const std::vector<SaKey>& reachable();

 private:
  struct Curiosity {
    std::set<SaKey> decile;
    long baseline = 0;
    long target = 0;
    long started = 0;
    long trigger_seq = 0;
    std::size_t model_size = 0;
  };

  long emit(LoopId loop, std::optional<KolbPhase> phase, std::string_view kind, ojson payload);
  void apply_injections();
  void sense();
  void end_episode(EndReason reason);
  void start_curiosity(long trigger_seq);
  void check_curiosity();
  /// First action towards the nearest least-visited decile pair, and that pair.
  std::optional<std::pair<Action, SaKey>> curiosity_action();
  void reflect_models(std::string_view kind, ojson extra);
  void refresh_standard();

  World world_;
  EngineConfig cfg_;
  TierConfig tier_;
  Tracer& tracer_;
  ModelStore store_;
  Policy policy_;
  PerformanceStandard standard_;
  VisitCounts visits_;
  std::mt19937_64 rng_;
  WorldState state_;
  long tick_ = 0;
  double episode_return_ = 0.0;
  std::vector<double> returns_;
  std::optional<Observation> pending_;
  std::vector<std::pair<SignPerceived, long>> pending_signs_;
  std::optional<std::vector<SaKey>> reachable_;
  std::optional<ProgressReport> last_progress_;
  std::optional<LearnerReport> last_learner_;
  std::optional<Curiosity> curiosity_;
  std::set<SaKey> intervened_;  // pairs the governor refused; curiosity avoids them
  std::vector<long> open_verdicts_;  // non-Allow L1 verdict seqs since last review
  long last_progress_seq_ = 0;
  int predictions_ = 0;
  int correct_predictions_ = 0;
};

}  // namespace reflect
