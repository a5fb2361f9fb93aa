#include "reflect/loops.hpp"

#include <algorithm>

#include "reflect/core.hpp"

namespace reflect {

std::string_view to_string(LoopId id) {
  static constexpr std::array<std::string_view, 9> names{"core", "L1", "L2", "L3", "L4", "L5", "L6", "L7", "L8"};
  return names[static_cast<std::size_t>(id)];
}

std::string_view loop_name(LoopId id) {
  switch (id) {
    case LoopId::Core: return "Operational core";
    case LoopId::L1: return "Governing Behaviour";
    case LoopId::L2: return "Abstract Conceptualization of Experience";
    case LoopId::L3: return "Integrate extrinsic factors";
    case LoopId::L4: return "Integrate design goals";
    case LoopId::L5: return "Active Experimentation to Improve Potential Behaviour";
    case LoopId::L6: return "Reflect on operational goals/progress";
    case LoopId::L7: return "Reflect on learning mechanisms";
    case LoopId::L8: return "Reflective Thinking";
  }
  return "?";
}

std::optional<LoopId> parse_loop_id(std::string_view s) {
  for (std::uint8_t i = 0; i <= static_cast<std::uint8_t>(LoopId::L8); ++i) {
    if (to_string(static_cast<LoopId>(i)) == s) return static_cast<LoopId>(i);
  }
  return std::nullopt;
}

TierConfig TierConfig::for_tier(int tier) {
  if (tier < 0 || tier > 4) throw ConfigError("tier must be 0..4, got " + std::to_string(tier));
  TierConfig t;
  t.tier = tier;
  if (tier >= 1) t.enabled.insert(LoopId::L1);
  if (tier >= 2) t.enabled.insert({LoopId::L2, LoopId::L3, LoopId::L4});
  if (tier >= 3) t.enabled.insert({LoopId::L5, LoopId::L6, LoopId::L7});
  if (tier >= 4) t.enabled.insert(LoopId::L8);
  return t;
}

std::string_view to_string(Composition c) {
  switch (c) {
    case Composition::Curiosity: return "curiosity";
    case Composition::CuriosityIntegrate: return "curiosity_integrate";
    case Composition::GovernanceReflection: return "governance_reflection";
    case Composition::DeliberativeDirection: return "deliberative_direction";
  }
  return "?";
}

std::optional<Composition> parse_composition(std::string_view s) {
  for (auto c : kCompositions) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

std::set<LoopId> members(Composition c) {
  switch (c) {
    case Composition::Curiosity: return {LoopId::L2, LoopId::L6};
    case Composition::CuriosityIntegrate: return {LoopId::L2, LoopId::L6, LoopId::L8};
    case Composition::GovernanceReflection: return {LoopId::L1, LoopId::L8};
    case Composition::DeliberativeDirection: return {LoopId::L1, LoopId::L8, LoopId::L6};
  }
  return {};
}

bool members_enabled(Composition c, const TierConfig& t) {
  const auto m = members(c);
  return std::all_of(m.begin(), m.end(), [&](LoopId id) { return t.has(id); });
}

}  // namespace reflect
