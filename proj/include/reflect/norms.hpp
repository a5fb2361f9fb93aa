#pragma once

#include <string>
#include <string_view>

#include "reflect/core.hpp"

namespace reflect {

enum class NormKind : std::uint8_t { Prohibition, Obligation };
enum class NormSource : std::uint8_t { Design, Environment, Inferred };

enum class Template : std::uint8_t {
  AgentInZone,           // prohibition: next agent cell lies in zone
  AgentEntersCellKind,   // prohibition: agent moves into a cell of `kind`
  OtherEntersCellKind,   // prohibition: some NPC moves into a cell of `kind`
  StepCountExceeds,      // prohibition: episode step after the transition > n
  PreventOtherEntering,  // obligation: no NPC enters `kind` within `horizon`
};

/// One instance of the closed predicate template set. Only the fields used by
/// `tmpl` are meaningful; the rest stay at their defaults so that equality
/// and ordering are structural.
struct Predicate {
  Template tmpl = Template::AgentInZone;
  std::string zone;
  CellType kind = CellType::Empty;
  int n = 0;
  int horizon = 0;

  auto operator<=>(const Predicate&) const = default;
  bool operator==(const Predicate&) const = default;

  /// Text form, e.g. `agent_in_zone(Z1)`, `prevent_other_entering(hazard,5)`.
  std::string str() const;
  static Predicate parse(std::string_view s);

  bool is_obligation() const { return tmpl == Template::PreventOtherEntering; }
};

struct NormSpec {
  std::string id;
  NormKind kind = NormKind::Prohibition;
  Predicate predicate;
  double severity = 1.0;
  NormSource source = NormSource::Design;
  bool active = true;

  bool operator==(const NormSpec&) const = default;

  /// `ID:KIND:PREDICATE:SEVERITY`, the control-channel form.
  std::string str() const;
  static NormSpec parse(std::string_view spec, NormSource source = NormSource::Design);

  /// Throws ConfigError when kind and template disagree or severity <= 0.
  void validate() const;
};

std::string_view to_string(NormKind k);
std::string_view to_string(NormSource s);
NormKind parse_norm_kind(std::string_view s);
NormSource parse_norm_source(std::string_view s);

}  // namespace reflect
