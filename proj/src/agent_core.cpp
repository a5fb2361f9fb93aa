#include "reflect/agent_core.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

namespace reflect {

using ojson = nlohmann::ordered_json;

PerformanceStandard PerformanceStandard::from_goals(const GoalStore& goals) {
  PerformanceStandard s;
  for (const auto& [id, g] : goals.goals()) s.weights[id] = g.weight;
  return s;
}

bool PerformanceStandard::consistent_with(const GoalStore& goals) const {
  return std::all_of(weights.begin(), weights.end(),
                     [&](const auto& kv) { return goals.goals().contains(kv.first); });
}

Feedback criticize(const Percept& percept, const PerformanceStandard& standard, const CriticContext& ctx) {
  Feedback fb;
  fb.step = ctx.step;
  double task = 0.0, sanction = 0.0, harm = 0.0;
  bool has_task = false, has_sanction = false, has_harm = false;
  for (const auto& ev : percept.events) {
    if (auto* r = std::get_if<RewardCollected>(&ev)) {
      task += r->value;
      has_task = true;
    } else if (auto* h = std::get_if<HazardEntered>(&ev)) {
      task -= h->penalty;
      has_task = true;
    } else if (auto* s = std::get_if<SanctionEvent>(&ev)) {
      sanction -= s->penalty;
      has_sanction = true;
    } else if (std::holds_alternative<HarmEvent>(ev)) {
      harm -= 1.0;
      has_harm = true;
    }
  }

  auto weight_of = [&](const std::string& id) {
    auto it = standard.weights.find(id);
    if (it == standard.weights.end()) throw UnknownGoalId("no weight for goal '" + id + "'");
    return it->second;
  };
  auto add = [&](const std::string& id, double value, double w) {
    fb.components[id] = value;
    fb.scalar += w * value;
  };

  if (has_task) add("task_reward", task, weight_of("task_reward"));
  if (has_sanction) add("sanction_penalty", sanction, weight_of("sanction_penalty"));
  if (has_harm) add("harm_to_other", harm, weight_of("harm_to_other"));
  if (ctx.interventions > 0) {
    auto it = standard.weights.find("intervention");
    add("intervention", -static_cast<double>(ctx.interventions), it == standard.weights.end() ? 1.0 : it->second);
  }
  if (ctx.novel) {
    if (auto it = standard.weights.find("exploration_bonus"); it != standard.weights.end()) {
      add("exploration_bonus", 1.0, it->second);
    }
  }
  return fb;
}

std::string_view to_string(StrategyId s) {
  return s == StrategyId::QTable ? "qtable" : "planner";
}

StrategyId parse_strategy(std::string_view s) {
  if (s == "qtable") return StrategyId::QTable;
  if (s == "planner") return StrategyId::ModelBasedPlanner;
  throw UnknownStrategy("unknown learning strategy '" + std::string(s) + "'");
}

void PolicyConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be in (0, 1]");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must be in [0, 1)");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must be in [0, 1]");
  if (planning_horizon < 1) throw ConfigError("planning_horizon must be >= 1");
}

Policy::Policy(PolicyConfig cfg) : cfg_(cfg) { cfg_.validate(); }

double Policy::q(const StateKey& s, Action a) const {
  auto it = q_.find(s);
  return it == q_.end() ? 0.0 : it->second[index_of(a)];
}

double Policy::state_value(const StateKey& s) const {
  auto it = value_.find(s);
  return it == value_.end() ? 0.0 : it->second;
}

double Policy::lookahead(const StateKey& s, Action a, int depth) const {
  const auto* e = model_.find(s, a);
  if (!e) return 0.0;
  const double r = reward_.at({s, a}).mean;
  if (absorbing_.at({s, a})) return r;
  if (depth <= 1) return r + cfg_.gamma * state_value(e->next);
  double best = lookahead(e->next, Action::North, depth - 1);
  for (std::size_t i = 1; i < kActionCount; ++i) best = std::max(best, lookahead(e->next, kActions[i], depth - 1));
  return r + cfg_.gamma * best;
}

std::array<double, kActionCount> Policy::action_values(const StateKey& s) const {
  std::array<double, kActionCount> v{};
  if (cfg_.strategy == StrategyId::QTable) {
    if (auto it = q_.find(s); it != q_.end()) v = it->second;
  } else {
    for (std::size_t i = 0; i < kActionCount; ++i) v[i] = lookahead(s, kActions[i], cfg_.planning_horizon);
  }
  return v;
}

Action Policy::greedy(const StateKey& s) const {
  const auto v = action_values(s);
  std::size_t best = 0;
  for (std::size_t i = 1; i < kActionCount; ++i) {
    if (v[i] > v[best]) best = i;
  }
  return kActions[best];
}

void Policy::learn(const Feedback& fb, const StateKey& s, Action a, const StateKey& next, bool absorbing) {
  const double r = fb.scalar;
  if (cfg_.strategy == StrategyId::QTable) {
    double max_next = 0.0;
    if (!absorbing) {
      if (auto it = q_.find(next); it != q_.end()) max_next = *std::max_element(it->second.begin(), it->second.end());
    }
    auto& row = q_[s];
    double& qa = row[index_of(a)];
    qa += cfg_.alpha * (r + cfg_.gamma * max_next - qa);
    return;
  }

  model_.record(s, a, next, absorbing);
  auto& stat = reward_[{s, a}];
  ++stat.n;
  stat.mean += (r - stat.mean) / stat.n;
  absorbing_[{s, a}] = absorbing;
  if (std::find(episode_states_.begin(), episode_states_.end(), s) == episode_states_.end()) {
    episode_states_.push_back(s);
  }

  const std::size_t n = episode_states_.size();
  const std::size_t first = n > kPlannerSweepBudget ? n - kPlannerSweepBudget : 0;
  for (std::size_t i = n; i-- > first;) {
    const StateKey& st = episode_states_[i];
    double best = lookahead(st, Action::North, 1);
    for (std::size_t k = 1; k < kActionCount; ++k) best = std::max(best, lookahead(st, kActions[k], 1));
    value_[st] = best;
  }
}

void Policy::end_episode() { episode_states_.clear(); }

void Policy::switch_to(StrategyId id) {
  cfg_.strategy = id;
  episode_states_.clear();
}

std::size_t Policy::table_size() const {
  return cfg_.strategy == StrategyId::QTable ? q_.size() * kActionCount : model_.size();
}

std::string Policy::checkpoint() const {
  ojson j;
  j["format"] = "reflect-policy";
  j["version"] = 1;
  j["strategy"] = std::string(to_string(cfg_.strategy));
  j["alpha"] = cfg_.alpha;
  j["gamma"] = cfg_.gamma;
  j["epsilon"] = cfg_.epsilon;
  j["planning_horizon"] = cfg_.planning_horizon;
  ojson q = ojson::array();
  for (const auto& [s, row] : q_) q.push_back(ojson::array({s.str(), row}));
  j["q"] = std::move(q);
  ojson value = ojson::array();
  for (const auto& [s, v] : value_) value.push_back(ojson::array({s.str(), v}));
  j["value"] = std::move(value);
  ojson model = ojson::array();
  for (const auto& [sa, e] : model_.table()) {
    const auto& rs = reward_.at(sa);
    model.push_back(ojson::array({sa.first.str(), std::string(to_string(sa.second)), e.next.str(), e.visits,
                                  absorbing_.at(sa), rs.mean, rs.n}));
  }
  j["model"] = std::move(model);
  return j.dump();
}

std::uint64_t Policy::hash() const { return fnv1a64(checkpoint()); }

Policy Policy::from_checkpoint(std::string_view text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("policy checkpoint is not valid JSON: ") + e.what());
  }
  if (j.value("format", "") != "reflect-policy") throw ConfigError("not a policy checkpoint");
  if (j.value("version", 0) != 1) throw SchemaMismatch("unsupported policy checkpoint version");
  try {
    PolicyConfig cfg;
    cfg.strategy = parse_strategy(j.at("strategy").get<std::string>());
    cfg.alpha = j.at("alpha").get<double>();
    cfg.gamma = j.at("gamma").get<double>();
    cfg.epsilon = j.at("epsilon").get<double>();
    cfg.planning_horizon = j.at("planning_horizon").get<int>();
    Policy p(cfg);
    for (const auto& row : j.at("q")) {
      p.q_[StateKey::parse(row.at(0).get<std::string>())] = row.at(1).get<std::array<double, kActionCount>>();
    }
    for (const auto& row : j.at("value")) {
      p.value_[StateKey::parse(row.at(0).get<std::string>())] = row.at(1).get<double>();
    }
    for (const auto& row : j.at("model")) {
      const auto s = StateKey::parse(row.at(0).get<std::string>());
      const auto a = parse_action(row.at(1).get<std::string>());
      if (!a) throw ConfigError("bad action in checkpoint");
      const auto next = StateKey::parse(row.at(2).get<std::string>());
      const bool absorbing = row.at(4).get<bool>();
      p.model_.set(s, *a, next, absorbing);
      const int visits = row.at(3).get<int>();
      for (int i = 1; i < visits; ++i) p.model_.record(s, *a, next, absorbing);
      p.absorbing_[{s, *a}] = absorbing;
      p.reward_[{s, *a}] = RewardStat{row.at(5).get<double>(), row.at(6).get<int>()};
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed policy checkpoint: ") + e.what());
  }
}

Selection select_action(const StateKey& s, const Policy& policy, std::mt19937_64& rng) {
  const double u = uniform01(rng);
  const auto pick = static_cast<std::size_t>(rng() % kActionCount);
  if (u < policy.config().epsilon) return {kActions[pick], true};
  return {policy.greedy(s), false};
}

std::vector<Action> propose_exploration(const StateKey& s, const VisitCounts& counts) {
  std::vector<Action> out(kActions.begin(), kActions.end());
  std::stable_sort(out.begin(), out.end(),
                   [&](Action a, Action b) { return counts.get(s, a) < counts.get(s, b); });
  return out;
}

}  // namespace reflect
