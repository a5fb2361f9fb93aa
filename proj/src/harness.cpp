#include "reflect/harness.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace reflect {

RunResult run_scenario(const Scenario& sc, const RunOptions& opt, TraceSink& sink) {
  const auto control = parse_control(opt.control);
  EngineConfig cfg = sc.engine_for(opt.tier, opt.seed, control);
  if (opt.steps < 1) throw ConfigError("steps must be >= 1");
  Tracer tracer(sink, opt.seed, TierConfig::for_tier(opt.tier));
  TraceHeader h;
  h.scenario = sc.text;
  h.control = opt.control;
  h.tier = opt.tier;
  h.seed = opt.seed;
  h.steps = opt.steps;
  tracer.header(h);
  Engine engine(sc.grid, std::move(cfg), tracer);
  engine.run(opt.steps);
  tracer.trailer();
  RunResult r;
  r.metrics = tracer.metrics();
  r.returns = engine.returns();
  r.events = tracer.events();
  if (opt.want_checkpoint) r.checkpoint = engine.policy().checkpoint();
  if (opt.want_models) r.models = dump_models(engine.models()).dump(2);
  return r;
}

RunResult run_quiet(const Scenario& sc, int tier, std::uint64_t seed, long steps, const std::string& control) {
  NullSink sink;
  RunOptions opt;
  opt.tier = tier;
  opt.seed = seed;
  opt.steps = steps;
  opt.control = control;
  return run_scenario(sc, opt, sink);
}

std::vector<CompareRow> compare(const Scenario& sc, const std::vector<int>& tiers,
                                const std::vector<std::uint64_t>& seeds, long steps, const std::string& control) {
  const std::set<int> distinct(tiers.begin(), tiers.end());
  if (distinct.size() < 2) throw ConfigError("compare needs at least two distinct tiers");
  if (seeds.empty()) throw ConfigError("compare needs at least one seed");
  for (int t : tiers) TierConfig::for_tier(t);
  parse_control(control);  // surface malformed control text before any run
  // Tier 0 cannot receive injections, so its runs double as the baseline.
  std::map<std::uint64_t, Metrics> baseline;
  auto tier0 = [&](std::uint64_t seed) -> const Metrics& {
    auto it = baseline.find(seed);
    if (it == baseline.end()) it = baseline.emplace(seed, run_quiet(sc, 0, seed, steps).metrics).first;
    return it->second;
  };
  std::vector<CompareRow> rows;
  for (int t : tiers) {
    for (auto seed : seeds) {
      std::string ctl = control;
      try {
        sc.engine_for(t, seed, parse_control(control));
      } catch (const ConfigError&) {
        ctl.clear();  // this tier cannot receive the injections
      }
      CompareRow row;
      row.tier = t;
      row.seed = seed;
      row.metrics = t == 0 ? tier0(seed) : run_quiet(sc, t, seed, steps, ctl).metrics;
      row.harms_prevented = tier0(seed).harms - row.metrics.harms;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string compare_csv(const std::string& scenario, const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  out << "scenario,tier,seed,steps,episodes,violations,blocks,compromises,interventions,harms,harms_prevented,"
         "total_reward,norms_inferred,stuck_detections\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    out << scenario << ',' << r.tier << ',' << r.seed << ',' << m.steps << ',' << m.episodes << ',' << m.violations
        << ',' << m.blocks << ',' << m.compromises << ',' << (m.blocks + m.compromises) << ',' << m.harms << ','
        << r.harms_prevented << ',' << ojson(m.total_reward).dump() << ',' << m.promotions.size() << ','
        << m.stuck_detections << '\n';
  }
  return out.str();
}

std::string compare_table(const std::vector<CompareRow>& rows) {
  struct Acc {
    double violations = 0, reward = 0, interventions = 0, harms = 0;
    int n = 0;
  };
  std::map<int, Acc> by_tier;
  for (const auto& r : rows) {
    auto& a = by_tier[r.tier];
    a.violations += static_cast<double>(r.metrics.violations);
    a.reward += r.metrics.total_reward;
    a.interventions += static_cast<double>(r.metrics.blocks + r.metrics.compromises);
    a.harms += static_cast<double>(r.metrics.harms);
    ++a.n;
  }
  std::ostringstream out;
  out << std::left << std::setw(6) << "tier" << std::right << std::setw(12) << "violations" << std::setw(12)
      << "reward" << std::setw(15) << "interventions" << std::setw(10) << "harms" << std::setw(7) << "runs" << '\n';
  out << std::fixed << std::setprecision(2);
  for (const auto& [t, a] : by_tier) {
    out << std::left << std::setw(6) << t << std::right << std::setw(12) << a.violations / a.n << std::setw(12)
        << a.reward / a.n << std::setw(15) << a.interventions / a.n << std::setw(10) << a.harms / a.n
        << std::setw(7) << a.n << '\n';
  }
  return out.str();
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

ReplayReport replay(const std::vector<std::string>& lines) {
  if (lines.empty()) throw SchemaMismatch("empty trace");
  ojson head;
  try {
    head = ojson::parse(lines.front());
  } catch (const std::exception&) {
    throw SchemaMismatch("trace header is not JSON");
  }
  const TraceHeader h = TraceHeader::from_json(head);
  const Scenario sc = Scenario::parse(h.scenario);
  MemorySink sink;
  RunOptions opt;
  opt.tier = h.tier;
  opt.seed = h.seed;
  opt.steps = h.steps;
  opt.control = h.control;
  run_scenario(sc, opt, sink);

  ReplayReport rep;
  rep.lines = lines.size();
  const std::size_t n = std::max(lines.size(), sink.lines.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (i < lines.size() && i < sink.lines.size() && lines[i] == sink.lines[i]) continue;
    rep.line = i + 1;
    auto seq_of = [](const std::string& l) -> std::optional<long> {
      try {
        const auto j = ojson::parse(l);
        if (j.contains("seq")) return j.at("seq").get<long>();
      } catch (const std::exception&) {
      }
      return std::nullopt;
    };
    if (i < sink.lines.size()) rep.seq = seq_of(sink.lines[i]);
    if (!rep.seq && i < lines.size()) rep.seq = seq_of(lines[i]);
    if (i >= lines.size()) rep.detail = "trace ends early";
    else if (i >= sink.lines.size()) rep.detail = "trace has extra lines";
    else rep.detail = "record differs";
    return rep;
  }
  rep.ok = true;
  return rep;
}

ReplayReport replay_file(const std::string& path) { return replay(read_lines(path)); }

ojson dump_models(const ModelStore& store) {
  ojson j;
  j["version"] = store.version();
  j["observations"] = store.log().total_recorded();
  ojson tr = ojson::array();
  for (const auto& [sa, e] : store.transitions().table()) {
    tr.push_back(ojson::array({sa.first.str(), std::string(to_string(sa.second)), e.next.str(), e.visits, e.terminal}));
  }
  j["transitions"] = std::move(tr);
  ojson others = ojson::object();
  for (const auto& [npc, table] : store.others().table()) {
    ojson rows = ojson::array();
    for (const auto& [at, e] : table) rows.push_back(ojson::array({to_json(at), to_json(e.next), e.visits}));
    others[npc] = std::move(rows);
  }
  j["others"] = std::move(others);
  ojson norms = ojson::array();
  for (const auto& n : store.norms().norms()) {
    norms.push_back(ojson{{"spec", n.str()}, {"source", std::string(to_string(n.source))}, {"active", n.active}});
  }
  j["norms"] = std::move(norms);
  ojson goals = ojson::object();
  for (const auto& [id, g] : store.goals().goals()) {
    goals[id] = ojson{{"weight", g.weight}, {"source", std::string(to_string(g.source))}};
  }
  j["goals"] = std::move(goals);
  ojson hist = ojson::array();
  for (const auto& r : store.goals().history()) hist.push_back(to_json(r));
  j["goal_history"] = std::move(hist);
  j["rules"] = store.rules() ? to_json(*store.rules()) : ojson(nullptr);
  return j;
}

ojson latest_reports(const std::vector<std::string>& lines) {
  ojson out{{"progress", nullptr}, {"learner", nullptr}};
  for (const auto& l : lines) {
    const auto j = ojson::parse(l);
    if (!j.contains("seq")) continue;
    const auto& kind = j.at("kind");
    if (kind == "assess_progress") out["progress"] = ojson{{"seq", j.at("seq")}, {"report", j.at("payload")}};
    if (kind == "introspect") out["learner"] = ojson{{"seq", j.at("seq")}, {"report", j.at("payload")}};
  }
  return out;
}

std::string default_out_dir() {
  const char* d = std::getenv("REFLECT_OUT_DIR");
  return d && *d ? std::string(d) : std::string(".");
}

}  // namespace reflect
