#include "reflect/scenario.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace reflect {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> words(std::string_view s) {
  std::vector<std::string_view> out;
  while (true) {
    s = trim(s);
    if (s.empty()) break;
    auto sp = s.find_first_of(" \t");
    out.push_back(s.substr(0, sp));
    if (sp == std::string_view::npos) break;
    s.remove_prefix(sp);
  }
  return out;
}

template <class T>
T num(std::string_view s, std::string_view what) {
  T v{};
  s = trim(s);
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) {
    throw ConfigError("bad " + std::string(what) + " '" + std::string(s) + "'");
  }
  return v;
}

bool boolean(std::string_view s) {
  s = trim(s);
  if (s == "true" || s == "yes" || s == "1" || s == "on") return true;
  if (s == "false" || s == "no" || s == "0" || s == "off") return false;
  throw ConfigError("bad boolean '" + std::string(s) + "'");
}

Coord coord(std::string_view s) {
  const auto comma = s.find(',');
  if (comma == std::string_view::npos) throw ConfigError("bad coordinate '" + std::string(s) + "'");
  return {num<int>(s.substr(0, comma), "x"), num<int>(s.substr(comma + 1), "y")};
}

// key=value options trailing a line.
std::map<std::string, std::string> options(const std::vector<std::string_view>& ws, std::size_t from) {
  std::map<std::string, std::string> out;
  for (std::size_t i = from; i < ws.size(); ++i) {
    const auto eq = ws[i].find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected key=value, got '" + std::string(ws[i]) + "'");
    out[std::string(ws[i].substr(0, eq))] = std::string(ws[i].substr(eq + 1));
  }
  return out;
}

std::string take(std::map<std::string, std::string>& o, const std::string& key, std::string fallback = {}) {
  auto it = o.find(key);
  if (it == o.end()) return fallback;
  std::string v = it->second;
  o.erase(it);
  return v;
}

void no_leftovers(const std::map<std::string, std::string>& o) {
  if (!o.empty()) throw ConfigError("unknown option '" + o.begin()->first + "'");
}

struct Line {
  int no;
  std::string key;
  std::string value;
  std::string raw;
};

CompositionSwitch parse_switch(std::string_view s) {
  if (s == "auto") return CompositionSwitch::Auto;
  if (s == "on") return CompositionSwitch::On;
  if (s == "off") return CompositionSwitch::Off;
  throw ConfigError("composition switch must be auto|on|off");
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(std::string_view s) {
  s = trim(s);
  std::vector<std::uint64_t> out;
  if (const auto dots = s.find(".."); dots != std::string_view::npos) {
    const auto a = num<std::uint64_t>(s.substr(0, dots), "seed");
    const auto b = num<std::uint64_t>(s.substr(dots + 2), "seed");
    if (b < a) throw ConfigError("empty seed range");
    for (auto x = a; x <= b; ++x) out.push_back(x);
    return out;
  }
  while (!s.empty()) {
    const auto comma = s.find(',');
    out.push_back(num<std::uint64_t>(s.substr(0, comma), "seed"));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  if (out.empty()) throw ConfigError("seed list is empty");
  return out;
}

std::vector<int> parse_int_list(std::string_view s) {
  std::vector<int> out;
  for (auto v : parse_seed_list(s)) out.push_back(static_cast<int>(v));
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<Injection> parse_control(std::string_view text) {
  std::vector<Injection> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#' || t.front() == ';') continue;
    try {
      out.push_back(Injection::parse(t));
    } catch (const ConfigError& e) {
      throw ConfigError("control line " + std::to_string(no) + ": " + e.what());
    }
  }
  return out;
}

Scenario Scenario::parse(std::string_view text) {
  std::map<std::string, std::vector<Line>> sections;
  std::vector<std::pair<int, std::string>> rows;
  std::string current;
  {
    std::istringstream in{std::string(text)};
    std::string line;
    int no = 0;
    while (std::getline(in, line)) {
      ++no;
      const auto t = trim(line);
      if (t.empty()) continue;
      if (t.front() == '[' && t.back() == ']') {
        current = std::string(t.substr(1, t.size() - 2));
        static const std::set<std::string> known{"scenario", "grid",   "rewards",   "hazards", "zones",
                                                 "norms",    "signs",  "npcs",      "twin",    "inference",
                                                 "standard", "agent",  "run",       "reflection", "inject",
                                                 "model"};
        if (!known.contains(current)) {
          throw ConfigError("line " + std::to_string(no) + ": unknown section [" + current + "]");
        }
        sections[current];
        continue;
      }
      if (current == "grid") {
        rows.emplace_back(no, std::string(t));
        continue;
      }
      if (t.front() == '#' || t.front() == ';') continue;
      if (current.empty()) throw ConfigError("line " + std::to_string(no) + ": content before any section");
      const auto eq = t.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError("line " + std::to_string(no) + ": expected 'key = value'");
      }
      sections[current].push_back(
          {no, std::string(trim(t.substr(0, eq))), std::string(trim(t.substr(eq + 1))), std::string(t)});
    }
  }

  Scenario sc;
  sc.text = std::string(text);
  auto grid = std::make_shared<GridSpec>();
  GridSpec& g = *grid;
  EngineConfig& ec = sc.engine;

  auto each = [&](const std::string& sec, auto&& fn) {
    auto it = sections.find(sec);
    if (it == sections.end()) return;
    for (const auto& l : it->second) {
      try {
        fn(l);
      } catch (const ConfigError& e) {
        throw ConfigError("line " + std::to_string(l.no) + " [" + sec + "]: " + e.what());
      } catch (const Error& e) {
        throw ConfigError("line " + std::to_string(l.no) + " [" + sec + "]: " + e.what());
      }
    }
  };
  auto unknown = [](const Line& l) { throw ConfigError("unknown key '" + l.key + "'"); };

  each("scenario", [&](const Line& l) {
    if (l.key == "name") sc.name = l.value;
    else if (l.key == "episode_steps") g.episode_limit = num<int>(l.value, "episode_steps");
    else unknown(l);
  });

  if (rows.empty()) throw ConfigError("scenario has no [grid]");
  g.height = static_cast<int>(rows.size());
  g.width = static_cast<int>(rows.front().second.size());
  g.cells.assign(static_cast<std::size_t>(g.width * g.height), Cell{});
  std::map<std::string, Coord> npc_starts;
  bool have_agent = false;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& [no, row] = rows[r];
    if (static_cast<int>(row.size()) != g.width) {
      throw ConfigError("line " + std::to_string(no) + ": grid rows must all have width " + std::to_string(g.width));
    }
    const int y = g.height - 1 - static_cast<int>(r);
    for (int x = 0; x < g.width; ++x) {
      const char ch = row[static_cast<std::size_t>(x)];
      Cell& c = g.at({x, y});
      switch (ch) {
        case '.': break;
        case '#': c.type = CellType::Wall; break;
        case 'r': c.type = CellType::Reward; c.value = 1.0; break;
        case 'h': c.type = CellType::Hazard; c.value = 1.0; break;
        case 's': c.type = CellType::Sign; break;
        case 'e': c.type = CellType::Exit; break;
        case 'A':
          if (have_agent) throw ConfigError("line " + std::to_string(no) + ": more than one agent start");
          have_agent = true;
          g.agent_start = {x, y};
          break;
        default:
          if (ch >= '0' && ch <= '9') {
            npc_starts[std::string(1, ch)] = {x, y};
            break;
          }
          throw ConfigError("line " + std::to_string(no) + ": unknown grid symbol '" + std::string(1, ch) + "'");
      }
    }
  }
  if (!have_agent) throw ConfigError("grid has no agent start 'A'");

  auto values = [&](const std::string& sec, CellType type) {
    std::optional<double> fallback;
    std::map<Coord, double> specific;
    each(sec, [&](const Line& l) {
      const double v = num<double>(l.value, "value");
      if (l.key == "default") {
        fallback = v;
        return;
      }
      const Coord c = coord(l.key);
      if (g.type_at(c) != type) throw ConfigError("cell " + l.key + " is not a " + std::string(to_string(type)));
      specific[c] = v;
    });
    for (auto& c : g.cells) {
      if (c.type == type && fallback) c.value = *fallback;
    }
    for (const auto& [c, v] : specific) g.at(c).value = v;
  };
  values("rewards", CellType::Reward);
  values("hazards", CellType::Hazard);

  each("zones", [&](const Line& l) {
    const auto ws = words(l.value);
    if (ws.empty()) throw ConfigError("empty zone");
    std::set<Coord> cells;
    if (ws[0] == "rect") {
      if (ws.size() != 5) throw ConfigError("rect needs x0 y0 x1 y1");
      const int x0 = num<int>(ws[1], "x0"), y0 = num<int>(ws[2], "y0");
      const int x1 = num<int>(ws[3], "x1"), y1 = num<int>(ws[4], "y1");
      for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) {
        for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y) cells.insert({x, y});
      }
    } else if (ws[0] == "cells") {
      for (std::size_t i = 1; i < ws.size(); ++i) cells.insert(coord(ws[i]));
    } else {
      throw ConfigError("zone must be 'rect ...' or 'cells ...'");
    }
    for (Coord c : cells) {
      if (!g.in_bounds(c)) throw ConfigError("zone " + l.key + " leaves the grid");
    }
    g.zones[l.key] = std::move(cells);
  });

  each("norms", [&](const Line& l) {
    const auto ws = words(l.value);
    if (ws.size() < 2) throw ConfigError("norm needs 'KIND PREDICATE options'");
    auto o = options(ws, 2);
    GroundNorm gn;
    gn.spec.id = l.key;
    gn.spec.kind = parse_norm_kind(ws[0]);
    gn.spec.predicate = Predicate::parse(ws[1]);
    gn.spec.severity = num<double>(take(o, "severity", "1"), "severity");
    gn.spec.source = NormSource::Design;
    const auto d = take(o, "disclosure", "hidden");
    if (d == "design") gn.disclosure = Disclosure::Design;
    else if (d == "sign") gn.disclosure = Disclosure::Sign;
    else if (d == "hidden") gn.disclosure = Disclosure::Hidden;
    else throw ConfigError("disclosure must be design|sign|hidden");
    no_leftovers(o);
    gn.spec.validate();
    if (gn.spec.predicate.tmpl == Template::AgentInZone && !g.zones.contains(gn.spec.predicate.zone)) {
      throw ConfigError("norm " + l.key + " names unknown zone '" + gn.spec.predicate.zone + "'");
    }
    g.norms.push_back(std::move(gn));
  });

  each("signs", [&](const Line& l) {
    const auto ws = words(l.value);
    if (ws.empty()) throw ConfigError("sign needs a norm id");
    SignSpec s;
    s.at = coord(l.key);
    s.norm_id = std::string(ws[0]);
    auto o = options(ws, 1);
    s.radius = num<int>(take(o, "radius", "1"), "radius");
    if (auto goal = take(o, "goal"); !goal.empty()) {
      const auto colon = goal.find(':');
      if (colon == std::string::npos) throw ConfigError("goal must be ID:WEIGHT");
      s.goal = GoalWeight{goal.substr(0, colon), num<double>(std::string_view(goal).substr(colon + 1), "weight")};
      if (!is_known_goal(s.goal->goal_id)) throw ConfigError("unknown goal '" + s.goal->goal_id + "'");
    }
    no_leftovers(o);
    g.signs.push_back(std::move(s));
  });

  each("npcs", [&](const Line& l) {
    const auto ws = words(l.value);
    if (ws.empty() || ws[0] != "path") throw ConfigError("npc needs 'path x,y x,y ...'");
    NpcScript n;
    n.id = l.key;
    std::size_t i = 1;
    for (; i < ws.size() && ws[i].find('=') == std::string_view::npos; ++i) n.path.push_back(coord(ws[i]));
    auto o = options(ws, i);
    n.loop = boolean(take(o, "loop", "false"));
    no_leftovers(o);
    auto start = npc_starts.find(n.id);
    if (start == npc_starts.end()) throw ConfigError("npc " + n.id + " has no start digit in the grid");
    if (n.path.empty() || n.path.front() != start->second) {
      throw ConfigError("npc " + n.id + " path must begin at its grid start");
    }
    npc_starts.erase(start);
    g.npcs.push_back(std::move(n));
  });
  for (const auto& [id, at] : npc_starts) {
    g.npcs.push_back(NpcScript{id, {at}, false});  // stationary
  }

  each("twin", [&](const Line& l) {
    if (l.key == "fidelity") ec.fidelity = num<double>(l.value, "fidelity");
    else if (l.key == "basis") {
      if (l.value == "twin") ec.basis = Basis::Twin;
      else if (l.value == "learned") ec.basis = Basis::LearnedModels;
      else throw ConfigError("basis must be twin|learned");
    } else unknown(l);
  });

  each("inference", [&](const Line& l) {
    if (l.key == "s_min") ec.inference.s_min = num<int>(l.value, "s_min");
    else if (l.key == "window") ec.inference.window = num<int>(l.value, "window");
    else if (l.key == "templates") {
      ec.inference.templates_enabled.clear();
      std::string_view v = l.value;
      while (!v.empty()) {
        const auto comma = v.find(',');
        const auto name = trim(v.substr(0, comma));
        if (name == "agent_in_zone") ec.inference.templates_enabled.insert(Template::AgentInZone);
        else if (name == "agent_enters") ec.inference.templates_enabled.insert(Template::AgentEntersCellKind);
        else if (name == "other_enters") ec.inference.templates_enabled.insert(Template::OtherEntersCellKind);
        else if (name == "step_exceeds") ec.inference.templates_enabled.insert(Template::StepCountExceeds);
        else throw ConfigError("unknown template '" + std::string(name) + "'");
        if (comma == std::string_view::npos) break;
        v.remove_prefix(comma + 1);
      }
    } else unknown(l);
  });

  each("standard", [&](const Line& l) {
    if (!is_known_goal(l.key)) throw ConfigError("unknown goal '" + l.key + "'");
    ec.standard[l.key] = num<double>(l.value, "weight");
  });

  each("agent", [&](const Line& l) {
    if (l.key == "strategy") ec.policy.strategy = parse_strategy(l.value);
    else if (l.key == "alpha") ec.policy.alpha = num<double>(l.value, "alpha");
    else if (l.key == "gamma") ec.policy.gamma = num<double>(l.value, "gamma");
    else if (l.key == "epsilon") ec.policy.epsilon = num<double>(l.value, "epsilon");
    else if (l.key == "planning_horizon") ec.policy.planning_horizon = num<int>(l.value, "planning_horizon");
    else unknown(l);
  });

  each("run", [&](const Line& l) {
    if (l.key == "tier") sc.run.tier = num<int>(l.value, "tier");
    else if (l.key == "seeds") sc.run.seeds = parse_seed_list(l.value);
    else if (l.key == "steps") sc.run.steps = num<long>(l.value, "steps");
    else unknown(l);
  });

  each("reflection", [&](const Line& l) {
    auto& r = ec.reflection;
    if (l.key == "window") r.window = num<int>(l.value, "window");
    else if (l.key == "epsilon") r.epsilon = num<double>(l.value, "epsilon");
    else if (l.key == "schedule") r.schedule = num<int>(l.value, "schedule");
    else if (l.key == "self_apply") r.self_apply = boolean(l.value);
    else if (l.key == "k") r.k = num<int>(l.value, "k");
    else if (l.key == "horizon") r.horizon = num<int>(l.value, "horizon");
    else if (l.key == "curiosity_budget") r.curiosity_budget = num<long>(l.value, "curiosity_budget");
    else if (l.key == "bonus_weight") r.bonus_weight = num<double>(l.value, "bonus_weight");
    else if (auto c = parse_composition(l.key)) r.compositions[*c] = parse_switch(l.value);
    else unknown(l);
  });

  each("model", [&](const Line& l) {
    if (l.key == "log_capacity") ec.log_capacity = num<std::size_t>(l.value, "log_capacity");
    else unknown(l);
  });

  each("inject", [&](const Line& l) { ec.injections.push_back(Injection::parse(l.raw)); });

  if (sc.name.empty()) sc.name = "unnamed";
  if (sc.run.steps < 1) throw ConfigError("run steps must be >= 1");
  try {
    g.finalize();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  for (const auto& s : g.signs) {
    const auto* gn = g.find_norm(s.norm_id);
    if (gn && gn->disclosure == Disclosure::Hidden) {
      throw ConfigError("sign at " + std::to_string(s.at.x) + "," + std::to_string(s.at.y) +
                        " announces hidden norm " + s.norm_id);
    }
  }
  sc.grid = std::move(grid);
  ec.tier = sc.run.tier;
  ec.seed = sc.run.seeds.front();
  ec.validate();
  return sc;
}

Scenario Scenario::load(const std::string& path) { return parse(read_file(path)); }

EngineConfig Scenario::engine_for(int tier, std::uint64_t seed, const std::vector<Injection>& control) const {
  EngineConfig c = engine;
  c.tier = tier;
  c.seed = seed;
  c.injections.insert(c.injections.end(), control.begin(), control.end());
  c.validate();
  return c;
}

}  // namespace reflect
