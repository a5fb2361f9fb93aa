#include "reflect/norms.hpp"

#include <charconv>
#include <cstdlib>
#include <sstream>
#include <vector>

namespace reflect {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

int to_int(std::string_view s, std::string_view what) {
  s = trim(s);
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw ConfigError("expected integer for " + std::string(what) + ", got '" + std::string(s) + "'");
  }
  return v;
}

CellType to_kind(std::string_view s) {
  auto k = parse_cell_type(trim(s));
  if (!k) throw ConfigError("unknown cell kind '" + std::string(s) + "'");
  return *k;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  while (true) {
    const auto pos = s.find(sep);
    out.push_back(trim(s.substr(0, pos)));
    if (pos == std::string_view::npos) break;
    s.remove_prefix(pos + 1);
  }
  return out;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string Predicate::str() const {
  switch (tmpl) {
    case Template::AgentInZone: return "agent_in_zone(" + zone + ")";
    case Template::AgentEntersCellKind: return "agent_enters(" + std::string(to_string(kind)) + ")";
    case Template::OtherEntersCellKind: return "other_enters(" + std::string(to_string(kind)) + ")";
    case Template::StepCountExceeds: return "step_exceeds(" + std::to_string(n) + ")";
    case Template::PreventOtherEntering:
      return "prevent_other_entering(" + std::string(to_string(kind)) + "," + std::to_string(horizon) + ")";
  }
  return "?";
}

Predicate Predicate::parse(std::string_view s) {
  s = trim(s);
  const auto open = s.find('(');
  if (open == std::string_view::npos || s.back() != ')') {
    throw ConfigError("malformed predicate '" + std::string(s) + "'");
  }
  const auto name = s.substr(0, open);
  const auto args = split(s.substr(open + 1, s.size() - open - 2), ',');
  auto want = [&](std::size_t n) {
    if (args.size() != n) throw ConfigError("wrong arity for predicate '" + std::string(s) + "'");
  };
  Predicate p;
  if (name == "agent_in_zone") {
    want(1);
    p.tmpl = Template::AgentInZone;
    p.zone = std::string(args[0]);
    if (p.zone.empty()) throw ConfigError("empty zone id in '" + std::string(s) + "'");
  } else if (name == "agent_enters") {
    want(1);
    p.tmpl = Template::AgentEntersCellKind;
    p.kind = to_kind(args[0]);
  } else if (name == "other_enters") {
    want(1);
    p.tmpl = Template::OtherEntersCellKind;
    p.kind = to_kind(args[0]);
  } else if (name == "step_exceeds") {
    want(1);
    p.tmpl = Template::StepCountExceeds;
    p.n = to_int(args[0], "step_exceeds");
  } else if (name == "prevent_other_entering") {
    want(2);
    p.tmpl = Template::PreventOtherEntering;
    p.kind = to_kind(args[0]);
    p.horizon = to_int(args[1], "horizon");
    if (p.horizon < 1) throw ConfigError("obligation horizon must be >= 1");
  } else {
    throw ConfigError("unknown predicate template '" + std::string(name) + "'");
  }
  return p;
}

std::string_view to_string(NormKind k) {
  return k == NormKind::Prohibition ? "prohibition" : "obligation";
}

std::string_view to_string(NormSource s) {
  switch (s) {
    case NormSource::Design: return "design";
    case NormSource::Environment: return "environment";
    case NormSource::Inferred: return "inferred";
  }
  return "?";
}

NormKind parse_norm_kind(std::string_view s) {
  if (s == "prohibition") return NormKind::Prohibition;
  if (s == "obligation") return NormKind::Obligation;
  throw ConfigError("unknown norm kind '" + std::string(s) + "'");
}

NormSource parse_norm_source(std::string_view s) {
  if (s == "design") return NormSource::Design;
  if (s == "environment") return NormSource::Environment;
  if (s == "inferred") return NormSource::Inferred;
  throw ConfigError("unknown norm source '" + std::string(s) + "'");
}

std::string NormSpec::str() const {
  return id + ":" + std::string(to_string(kind)) + ":" + predicate.str() + ":" + format_double(severity);
}

NormSpec NormSpec::parse(std::string_view spec, NormSource source) {
  // The predicate itself may contain ':'-free commas, so split on the first
  // two and the last colon.
  const auto c1 = spec.find(':');
  const auto c2 = c1 == std::string_view::npos ? c1 : spec.find(':', c1 + 1);
  const auto c3 = spec.rfind(':');
  if (c1 == std::string_view::npos || c2 == std::string_view::npos || c3 == c2) {
    throw ConfigError("norm spec must be ID:KIND:PREDICATE:SEVERITY, got '" + std::string(spec) + "'");
  }
  NormSpec n;
  n.id = std::string(trim(spec.substr(0, c1)));
  n.kind = parse_norm_kind(trim(spec.substr(c1 + 1, c2 - c1 - 1)));
  n.predicate = Predicate::parse(spec.substr(c2 + 1, c3 - c2 - 1));
  const std::string sev(trim(spec.substr(c3 + 1)));
  char* end = nullptr;
  n.severity = std::strtod(sev.c_str(), &end);
  if (sev.empty() || end != sev.c_str() + sev.size()) {
    throw ConfigError("bad severity '" + sev + "'");
  }
  n.source = source;
  n.validate();
  return n;
}

void NormSpec::validate() const {
  if (id.empty()) throw ConfigError("norm id must be non-empty");
  if (id.find_first_of(": \t") != std::string::npos) {
    throw ConfigError("norm id '" + id + "' may not contain ':' or blanks");
  }
  if (!(severity > 0.0) || severity > 1e12) throw ConfigError("norm " + id + ": severity must be positive and finite");
  if ((kind == NormKind::Obligation) != predicate.is_obligation()) {
    throw ConfigError("norm " + id + ": kind does not match predicate template " + predicate.str());
  }
}

}  // namespace reflect
