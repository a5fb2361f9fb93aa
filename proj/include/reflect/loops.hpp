#pragma once

// Loop registry: loop ids, tier gating and loop compositions.

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string_view>

namespace reflect {

enum class LoopId : std::uint8_t { Core, L1, L2, L3, L4, L5, L6, L7, L8 };

inline constexpr std::array<LoopId, 8> kReflectiveLoops{LoopId::L1, LoopId::L2, LoopId::L3, LoopId::L4,
                                                        LoopId::L5, LoopId::L6, LoopId::L7, LoopId::L8};

std::string_view to_string(LoopId id);  // "core", "L1".."L8"
std::string_view loop_name(LoopId id);
std::optional<LoopId> parse_loop_id(std::string_view s);

struct TierConfig {
  int tier = 0;
  std::set<LoopId> enabled;

  /// 0: {}, 1: {L1}, 2: +{L2,L3,L4}, 3: +{L5,L6,L7}, 4: +{L8}. ConfigError
  /// outside 0..4.
  static TierConfig for_tier(int tier);
  bool has(LoopId id) const { return id == LoopId::Core || enabled.contains(id); }
};

enum class Composition : std::uint8_t { Curiosity, CuriosityIntegrate, GovernanceReflection, DeliberativeDirection };

inline constexpr std::array<Composition, 4> kCompositions{Composition::Curiosity, Composition::CuriosityIntegrate,
                                                          Composition::GovernanceReflection,
                                                          Composition::DeliberativeDirection};

std::string_view to_string(Composition c);
std::optional<Composition> parse_composition(std::string_view s);
std::set<LoopId> members(Composition c);
bool members_enabled(Composition c, const TierConfig& t);

/// Scenario switch for a composition. Auto follows the tier.
enum class CompositionSwitch : std::uint8_t { Auto, On, Off };

}  // namespace reflect
