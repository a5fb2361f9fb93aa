#include "reflect/trace.hpp"

namespace reflect {

ojson to_json(Coord c) {
  if (c == kRemoved) return nullptr;
  return ojson::array({c.x, c.y});
}

Coord coord_from_json(const ojson& j) {
  if (j.is_null()) return kRemoved;
  return {j.at(0).get<int>(), j.at(1).get<int>()};
}

ojson to_json(const StateKey& k) { return k.str(); }

ojson to_json(const StepEvent& e) {
  ojson j;
  std::visit(
      [&](const auto& ev) {
        using T = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<T, RewardCollected>) {
          j["type"] = "reward";
          j["at"] = to_json(ev.at);
          j["value"] = ev.value;
        } else if constexpr (std::is_same_v<T, HazardEntered>) {
          j["type"] = "hazard";
          j["at"] = to_json(ev.at);
          j["penalty"] = ev.penalty;
        } else if constexpr (std::is_same_v<T, SanctionEvent>) {
          j["type"] = "sanction";
          j["norm"] = ev.norm_id;
          j["penalty"] = ev.penalty;
        } else if constexpr (std::is_same_v<T, HarmEvent>) {
          j["type"] = "harm";
          j["npc"] = ev.npc_id;
          j["at"] = to_json(ev.at);
        } else if constexpr (std::is_same_v<T, SignPerceived>) {
          j["type"] = "sign";
          j["norm"] = ev.norm.str();
          j["at"] = to_json(ev.at);
          if (ev.goal) j["goal"] = ojson::array({ev.goal->goal_id, ev.goal->weight});
        } else {
          j["type"] = "episode_end";
          j["reason"] = std::string(to_string(ev.reason));
        }
      },
      e);
  return j;
}

ojson to_json(const std::vector<StepEvent>& events) {
  ojson a = ojson::array();
  for (const auto& e : events) a.push_back(to_json(e));
  return a;
}

ojson to_json(const NpcMove& m) {
  ojson j;
  j["npc"] = m.npc;
  j["from"] = to_json(m.from);
  j["to"] = to_json(m.to);
  j["blocked"] = m.blocked;
  j["removed"] = m.removed;
  return j;
}

ojson to_json(const Violation& v) {
  return ojson{{"norm", v.norm_id}, {"step", v.step}, {"severity", v.severity}};
}

ojson plan_json(std::span<const Action> plan) {
  ojson a = ojson::array();
  for (Action x : plan) a.push_back(std::string(to_string(x)));
  return a;
}

ojson to_json(const Verdict& v) {
  ojson j;
  j["verdict"] = std::string(to_string(v.kind));
  j["intended"] = std::string(to_string(v.intended));
  j["executed"] = std::string(to_string(v.executed()));
  ojson cites = ojson::array();
  for (const auto& x : v.violations) cites.push_back(to_json(x));
  j["violations"] = std::move(cites);
  if (v.suggestion) j["suggestion"] = std::string(to_string(*v.suggestion));
  if (v.kind == Verdict::Kind::Compromise) j["residual_cost"] = v.residual_cost;
  ojson costs = ojson::array();
  for (const auto& c : v.candidates) costs.push_back(c.cost());
  j["costs"] = std::move(costs);
  return j;
}

ojson to_json(const Rollout& r) {
  ojson j;
  j["basis"] = std::string(to_string(r.basis));
  j["plan"] = plan_json(r.plan);
  j["length"] = r.trajectory.size();
  j["confidence"] = r.confidence;
  j["norm_cost"] = r.norm_cost();
  j["harms"] = r.harms;
  j["rewards"] = r.rewards;
  std::string digest;
  for (const auto& s : r.trajectory) {
    digest += StateKey{s.state.agent, s.state.npc_pos, s.state.consumed}.str();
    digest += ';';
  }
  j["digest"] = hex64(fnv1a64(digest));
  return j;
}

ojson to_json(const Hypothesis& h) {
  ojson j;
  j["id"] = h.id;
  j["generator"] = h.generator;
  j["plan"] = plan_json(h.plan);
  j["value"] = h.value;
  j["norm_cost"] = h.norm_cost;
  j["status"] = std::string(to_string(h.status));
  return j;
}

ojson to_json(const NormChange& c) {
  ojson j;
  j["change"] = c.kind == NormChange::Kind::Promoted ? "promoted" : "demoted";
  j["norm"] = c.norm.id;
  j["spec"] = c.norm.str();
  j["support"] = c.support;
  j["counterexamples"] = c.counterexamples;
  j["tick"] = c.tick;
  return j;
}

ojson to_json(const GoalRevision& g) {
  ojson j;
  j["step"] = g.step;
  j["goal"] = g.goal_id;
  j["old_weight"] = g.old_weight ? ojson(*g.old_weight) : ojson(nullptr);
  j["new_weight"] = g.new_weight;
  j["source"] = std::string(to_string(g.source));
  return j;
}

ojson to_json(const ProgressReport& r) {
  ojson j;
  j["status"] = r.stuck ? "stuck" : "not_stuck";
  j["window"] = r.window;
  j["improvement"] = r.improvement;
  if (r.suggestion) j["suggestion"] = to_json(*r.suggestion);
  return j;
}

ojson to_json(const LearnerReport& r) {
  ojson j;
  j["strategy"] = std::string(to_string(r.strategy));
  j["alpha"] = r.hyperparameters.alpha;
  j["gamma"] = r.hyperparameters.gamma;
  j["epsilon"] = r.hyperparameters.epsilon;
  j["planning_horizon"] = r.hyperparameters.planning_horizon;
  j["coverage"] = r.coverage;
  j["visited_pairs"] = r.visited_pairs;
  j["reachable_pairs"] = r.reachable_pairs;
  j["prediction_accuracy"] = r.prediction_accuracy;
  return j;
}

ojson to_json(const Inconsistency& i) {
  ojson j;
  j["state"] = i.key.first.str();
  j["action"] = std::string(to_string(i.key.second));
  j["tabular"] = i.tabular ? to_json(*i.tabular) : ojson(nullptr);
  j["rules"] = i.rules ? to_json(*i.rules) : ojson(nullptr);
  j["resolution"] = std::string(to_string(i.resolution));
  return j;
}

ojson to_json(const Rule& r) {
  return ojson{{"guard", r.guard.str()}, {"action", std::string(to_string(r.action))}, {"effect", r.effect.str()}};
}

ojson to_json(const RuleSetModel& rs) {
  ojson rules = ojson::array();
  for (const auto& r : rs.rules) rules.push_back(to_json(r));
  ojson ex = ojson::array();
  for (const auto& [sa, c] : rs.exceptions) {
    ex.push_back(ojson::array({sa.first.str(), std::string(to_string(sa.second)), to_json(c)}));
  }
  return ojson{{"rules", std::move(rules)}, {"exceptions", std::move(ex)}};
}

FileSink::FileSink(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw Error("cannot open trace file '" + path + "' for writing");
}

void FileSink::write(const std::string& line) {
  out_ << line << '\n';
  if (!out_) throw Error("trace write failed");
}

ojson TraceHeader::to_json() const {
  ojson j;
  j["schema"] = std::string(kTraceSchema);
  j["kind"] = "header";
  j["tier"] = tier;
  j["seed"] = seed;
  j["steps"] = steps;
  j["digest"] = hex64(fnv1a64(scenario + '\0' + control));
  j["scenario"] = scenario;
  j["control"] = control;
  return j;
}

TraceHeader TraceHeader::from_json(const ojson& j) {
  if (!j.is_object() || !j.contains("schema")) throw SchemaMismatch("trace has no schema header");
  const auto schema = j.at("schema").get<std::string>();
  if (schema != kTraceSchema) {
    throw SchemaMismatch("unsupported trace schema '" + schema + "', expected '" + std::string(kTraceSchema) + "'");
  }
  try {
    TraceHeader h;
    h.tier = j.at("tier").get<int>();
    h.seed = j.at("seed").get<std::uint64_t>();
    h.steps = j.at("steps").get<long>();
    h.scenario = j.at("scenario").get<std::string>();
    h.control = j.at("control").get<std::string>();
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatch(std::string("malformed trace header: ") + e.what());
  }
}

void Metrics::observe(const ojson& rec) {
  if (!rec.contains("seq")) return;
  const auto& loop = rec.at("loop").get_ref<const std::string&>();
  const auto& kind = rec.at("kind").get_ref<const std::string&>();
  const auto& p = rec.at("payload");
  if (loop == "core" && kind == "step") {
    ++steps;
    proposals[p.at("intended").get<std::string>()] += 1;
    for (const auto& ev : p.at("events")) {
      const auto& type = ev.at("type").get_ref<const std::string&>();
      if (type == "sanction") {
        ++violations;
        ++violations_by_norm[ev.at("norm").get<std::string>()];
      } else if (type == "harm") {
        ++harms;
      } else if (type == "reward") {
        total_reward += ev.at("value").get<double>();
      }
    }
  } else if (loop == "core" && kind == "episode_end") {
    ++episodes;
  } else if (loop == "L1" && kind == "vet") {
    const auto& v = p.at("verdict").get_ref<const std::string&>();
    if (v == "block") ++blocks;
    if (v == "compromise") ++compromises;
  } else if (loop == "L2" && kind == "infer_norms") {
    for (const auto& c : p.at("changes")) {
      if (c.at("change") == "promoted") {
        promotions.push_back({c.at("norm").get<std::string>(), c.at("tick").get<long>(),
                              c.at("tick").get<long>() - c.at("first_support_tick").get<long>()});
      } else {
        ++demotions;
      }
    }
  } else if (loop == "L3" && kind == "integrate_sign") {
    sign_integrations.push_back(
        {p.at("norm").get<std::string>(), rec.at("step").get<long>() - p.at("perceived_tick").get<long>()});
  } else if (loop == "L6" && kind == "assess_progress") {
    if (p.at("status") == "stuck") ++stuck_detections;
  } else if (loop == "L7" && kind == "introspect") {
    coverage_curve.emplace_back(rec.at("episode").get<int>(), p.at("coverage").get<double>());
  }
}

ojson Metrics::to_json() const {
  ojson j;
  j["steps"] = steps;
  j["episodes"] = episodes;
  j["violations"] = violations;
  j["violations_by_norm"] = violations_by_norm;
  j["blocks"] = blocks;
  j["compromises"] = compromises;
  j["interventions"] = blocks + compromises;
  j["harms"] = harms;
  j["total_reward"] = total_reward;
  ojson pr = ojson::array();
  for (const auto& x : promotions) pr.push_back(ojson{{"norm", x.norm}, {"tick", x.tick}, {"latency", x.latency}});
  j["norms_inferred"] = std::move(pr);
  j["demotions"] = demotions;
  ojson si = ojson::array();
  for (const auto& x : sign_integrations) si.push_back(ojson{{"norm", x.norm}, {"latency", x.latency}});
  j["sign_integrations"] = std::move(si);
  j["stuck_detections"] = stuck_detections;
  ojson cov = ojson::array();
  for (const auto& [e, c] : coverage_curve) cov.push_back(ojson::array({e, c}));
  j["coverage_curve"] = std::move(cov);
  j["proposals"] = proposals;
  return j;
}

Tracer::Tracer(TraceSink& sink, std::uint64_t seed, TierConfig tier) : sink_(sink), seed_(seed), tier_(std::move(tier)) {}

void Tracer::header(const TraceHeader& h) { sink_.write(h.to_json().dump()); }

long Tracer::emit(LoopId loop, std::optional<KolbPhase> phase, std::string_view kind, long step, int episode,
                  ojson payload) {
  if (!tier_.has(loop)) {
    throw InvalidState("loop " + std::string(to_string(loop)) + " is not enabled at tier " +
                       std::to_string(tier_.tier));
  }
  ojson rec;
  rec["seq"] = ++seq_;
  rec["step"] = step;
  rec["episode"] = episode;
  rec["loop"] = std::string(to_string(loop));
  rec["phase"] = phase ? ojson(std::string(to_string(*phase))) : ojson(nullptr);
  rec["kind"] = std::string(kind);
  rec["seed"] = seed_;
  rec["payload"] = std::move(payload);
  metrics_.observe(rec);
  if (!sink_.discards()) sink_.write(rec.dump());
  return seq_;
}

void Tracer::trailer() {
  ojson j;
  j["kind"] = "metrics";
  j["metrics"] = metrics_.to_json();
  sink_.write(j.dump());
}

Metrics metrics_from_lines(const std::vector<std::string>& lines) {
  Metrics m;
  for (const auto& l : lines) m.observe(ojson::parse(l));
  return m;
}

}  // namespace reflect
