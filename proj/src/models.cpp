#include "reflect/models.hpp"

#include <algorithm>
#include <cmath>

namespace reflect {

void ObservationLog::record(Observation obs) {
  if (!entries_.empty()) {
    const Observation& last = entries_.back();
    if (obs.episode < last.episode) throw OutOfOrder("observation from an earlier episode");
    if (obs.episode == last.episode && obs.step() != last.step() + 1) {
      throw OutOfOrder("observation step " + std::to_string(obs.step()) + " does not follow step " +
                       std::to_string(last.step()));
    }
  }
  entries_.push_back(std::move(obs));
  ++total_;
  if (capacity_ != 0 && entries_.size() > capacity_) entries_.pop_front();
}

std::optional<StateKey> TransitionModel::predict(const StateKey& s, Action a) const {
  const Entry* e = find(s, a);
  if (!e) return std::nullopt;
  return e->next;
}

const TransitionModel::Entry* TransitionModel::find(const StateKey& s, Action a) const {
  auto it = table_.find({s, a});
  return it == table_.end() ? nullptr : &it->second;
}

int TransitionModel::visits(const StateKey& s, Action a) const {
  const Entry* e = find(s, a);
  return e ? e->visits : 0;
}

TransitionModel::RecordResult TransitionModel::record(const StateKey& s, Action a, const StateKey& next,
                                                      bool terminal) {
  auto [it, inserted] = table_.try_emplace({s, a}, Entry{next, 0, terminal});
  ++it->second.visits;
  if (inserted) return {Outcome::Inserted, std::nullopt};
  if (it->second.next == next && it->second.terminal == terminal) return {Outcome::Confirmed, std::nullopt};
  RecordResult r{Outcome::Corrected, it->second.next};
  it->second.next = next;
  it->second.terminal = terminal;
  it->second.visits = 1;
  return r;
}

TransitionModel::RecordResult TransitionModel::record_strict(const StateKey& s, Action a, const StateKey& next,
                                                             bool terminal) {
  const Entry* e = find(s, a);
  if (e && (e->next != next || e->terminal != terminal)) {
    throw ModelConflict("(" + s.str() + ", " + std::string(to_string(a)) + ") already maps to " + e->next.str() +
                        ", observed " + next.str());
  }
  return record(s, a, next, terminal);
}

void TransitionModel::set(const StateKey& s, Action a, const StateKey& next, bool terminal) {
  auto& e = table_[{s, a}];
  e.next = next;
  e.terminal = terminal;
  if (e.visits == 0) e.visits = 1;
}

bool TransitionModel::operator==(const TransitionModel& o) const {
  if (table_.size() != o.table_.size()) return false;
  return std::equal(table_.begin(), table_.end(), o.table_.begin(), [](const auto& a, const auto& b) {
    return a.first == b.first && a.second.next == b.second.next && a.second.visits == b.second.visits &&
           a.second.terminal == b.second.terminal;
  });
}

std::optional<Coord> OtherAgentModel::predict(const std::string& npc, Coord at) const {
  auto it = table_.find(npc);
  if (it == table_.end()) return std::nullopt;
  auto jt = it->second.find(at);
  if (jt == it->second.end()) return std::nullopt;
  return jt->second.next;
}

bool OtherAgentModel::record(const std::string& npc, Coord from, Coord to) {
  auto [it, inserted] = table_[npc].try_emplace(from, Entry{to, 0});
  ++it->second.visits;
  if (inserted || it->second.next == to) return false;
  it->second.next = to;
  it->second.visits = 1;
  return true;
}

std::size_t OtherAgentModel::size() const {
  std::size_t n = 0;
  for (const auto& [id, t] : table_) n += t.size();
  return n;
}

bool OtherAgentModel::operator==(const OtherAgentModel& o) const {
  if (table_.size() != o.table_.size()) return false;
  for (auto a = table_.begin(), b = o.table_.begin(); a != table_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.size() != b->second.size()) return false;
    for (auto x = a->second.begin(), y = b->second.begin(); x != a->second.end(); ++x, ++y) {
      if (x->first != y->first || x->second.next != y->second.next || x->second.visits != y->second.visits) {
        return false;
      }
    }
  }
  return true;
}

bool NormModel::add(NormSpec n) {
  if (find(n.id)) return false;
  norms_.push_back(std::move(n));
  return true;
}

bool NormModel::remove(const std::string& id) {
  auto it = std::find_if(norms_.begin(), norms_.end(), [&](const NormSpec& n) { return n.id == id; });
  if (it == norms_.end()) return false;
  norms_.erase(it);
  return true;
}

const NormSpec* NormModel::find(const std::string& id) const {
  for (const auto& n : norms_) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

void NormModel::set_hypothesis_space(std::vector<Predicate> space) {
  hypotheses_.clear();
  hypotheses_.reserve(space.size());
  for (auto& p : space) {
    NormHypothesis h;
    h.predicate = std::move(p);
    hypotheses_.push_back(std::move(h));
  }
}

std::string_view to_string(GoalSource s) {
  switch (s) {
    case GoalSource::Design: return "design";
    case GoalSource::Environment: return "environment";
    case GoalSource::Reflection: return "reflection";
  }
  return "?";
}

bool is_known_goal(std::string_view id) {
  return std::find(kKnownGoals.begin(), kKnownGoals.end(), id) != kKnownGoals.end();
}

void GoalStore::set(const std::string& id, double weight, GoalSource source, long step, std::string description) {
  if (!is_known_goal(id)) throw UnknownGoalSchema("unknown goal id '" + id + "'");
  if (!std::isfinite(weight)) throw UnknownGoalSchema("goal weight for '" + id + "' must be finite");
  auto it = goals_.find(id);
  GoalRevision rev{step, id, std::nullopt, weight, source};
  if (it != goals_.end()) {
    rev.old_weight = it->second.weight;
    it->second.weight = weight;
    it->second.source = source;
    if (!description.empty()) it->second.description = std::move(description);
  } else {
    goals_.emplace(id, Goal{description.empty() ? id : std::move(description), weight, source});
  }
  history_.push_back(rev);
}

std::optional<double> GoalStore::weight(const std::string& id) const {
  auto it = goals_.find(id);
  if (it == goals_.end()) return std::nullopt;
  return it->second.weight;
}

std::string Guard::str() const {
  switch (kind) {
    case Kind::Always: return "always";
    case Kind::TargetType: return "target=" + std::string(to_string(type));
    case Kind::SourceType: return "source=" + std::string(to_string(type));
  }
  return "?";
}

std::string Effect::str() const {
  if (kind == Kind::NoMove) return "stay";
  return "step(" + std::to_string(delta.x) + "," + std::to_string(delta.y) + ")";
}

bool RuleSetModel::guard_holds(const Guard& g, const GridSpec& grid, const StateKey& s, Action a) const {
  switch (g.kind) {
    case Guard::Kind::Always: return true;
    case Guard::Kind::TargetType: return grid.type_at(s.agent + displacement(a)) == g.type;
    case Guard::Kind::SourceType: return grid.type_at(s.agent) == g.type;
  }
  return false;
}

Coord RuleSetModel::apply(const Effect& e, const GridSpec& grid, const StateKey& s) const {
  if (e.kind == Effect::Kind::NoMove) return s.agent;
  const Coord target = s.agent + e.delta;
  if (!grid.in_bounds(target) || grid.at(target).type == CellType::Wall) return s.agent;
  for (Coord npc : s.npcs) {
    if (npc == target) return s.agent;
  }
  return target;
}

std::optional<Coord> RuleSetModel::predict(const GridSpec& grid, const StateKey& s, Action a) const {
  if (auto it = exceptions.find({s, a}); it != exceptions.end()) return it->second;
  for (const auto& r : rules) {
    if (r.action == a && guard_holds(r.guard, grid, s, a)) return apply(r.effect, grid, s);
  }
  return std::nullopt;
}

ModelStore::ModelStore(std::size_t log_capacity)
    : log_(std::make_shared<ObservationLog>(log_capacity)),
      transitions_(std::make_shared<TransitionModel>()),
      others_(std::make_shared<OtherAgentModel>()),
      norms_(std::make_shared<NormModel>()),
      goals_(std::make_shared<GoalStore>()) {}

std::shared_ptr<const ModelSnapshot> ModelStore::snapshot() const {
  auto s = std::make_shared<ModelSnapshot>();
  s->version = version_;
  s->log = log_;
  s->transitions = transitions_;
  s->others = others_;
  s->norms = norms_;
  s->goals = goals_;
  s->rules = rules_;
  return s;
}

template <class T>
T& ModelStore::cow(std::shared_ptr<const T>& p) {
  ++version_;
  if (!p) {
    p = std::make_shared<T>();
  } else if (p.use_count() > 1) {
    p = std::make_shared<T>(*p);
  }
  // Every pointer held here was created as a non-const T.
  return const_cast<T&>(*p);
}

void ModelStore::record(Observation obs) { mutable_log().record(std::move(obs)); }
ObservationLog& ModelStore::mutable_log() { return cow(log_); }
TransitionModel& ModelStore::mutable_transitions() { return cow(transitions_); }
OtherAgentModel& ModelStore::mutable_others() { return cow(others_); }
NormModel& ModelStore::mutable_norms() { return cow(norms_); }
GoalStore& ModelStore::mutable_goals() { return cow(goals_); }
RuleSetModel& ModelStore::mutable_rules() { return cow(rules_); }

}  // namespace reflect
