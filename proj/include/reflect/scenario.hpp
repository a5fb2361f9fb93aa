#pragma once

// Scenario files: an INI-style description of the grid, ground-truth norms,
// signs, NPC scripts and the engine settings of a run.

#include <memory>
#include <string>
#include <vector>

#include "reflect/loop_engine.hpp"

namespace reflect {

struct RunConfig {
  int tier = 0;
  std::vector<std::uint64_t> seeds{1};
  long steps = 1000;
};

struct Scenario {
  std::string name;
  std::string text;  // verbatim source, recorded in trace headers
  std::shared_ptr<const GridSpec> grid;
  EngineConfig engine;  // tier and seed are filled in per run
  RunConfig run;

  /// Throws ConfigError with a line number on any problem.
  static Scenario parse(std::string_view text);
  static Scenario load(const std::string& path);

  /// Engine settings for one run, with control-channel injections appended.
  EngineConfig engine_for(int tier, std::uint64_t seed, const std::vector<Injection>& control = {}) const;
};

/// One injection per non-blank, non-comment line.
std::vector<Injection> parse_control(std::string_view text);

/// "1..20" or "1,2,5".
std::vector<std::uint64_t> parse_seed_list(std::string_view s);
std::vector<int> parse_int_list(std::string_view s);

std::string read_file(const std::string& path);  // throws ConfigError

}  // namespace reflect
