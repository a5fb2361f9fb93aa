#pragma once

// Run harness behind the CLI: seeded runs with traces, tier comparisons,
// byte-exact replay, model dumps and report queries.

#include <optional>
#include <string>
#include <vector>

#include "reflect/scenario.hpp"

namespace reflect {

struct RunOptions {
  int tier = 0;
  std::uint64_t seed = 1;
  long steps = 1000;
  std::string control;  // control-channel text
  bool want_checkpoint = false;
  bool want_models = false;
};

struct RunResult {
  Metrics metrics;
  std::vector<double> returns;
  std::string checkpoint;  // policy checkpoint JSON when requested
  std::string models;      // model dump JSON when requested
  long events = 0;
};

/// Header, every trace event and the metrics trailer go to `sink`.
RunResult run_scenario(const Scenario& sc, const RunOptions& opt, TraceSink& sink);

/// Runs a scenario without keeping the trace.
RunResult run_quiet(const Scenario& sc, int tier, std::uint64_t seed, long steps, const std::string& control = {});

struct CompareRow {
  int tier = 0;
  std::uint64_t seed = 0;
  Metrics metrics;
  long harms_prevented = 0;  // tier-0 harms minus this run's, same seed
};

/// Every (tier, seed) pair in tier-major order. ConfigError for fewer than
/// two distinct tiers or no seeds.
std::vector<CompareRow> compare(const Scenario& sc, const std::vector<int>& tiers,
                                const std::vector<std::uint64_t>& seeds, long steps, const std::string& control = {});
std::string compare_csv(const std::string& scenario, const std::vector<CompareRow>& rows);
std::string compare_table(const std::vector<CompareRow>& rows);

struct ReplayReport {
  bool ok = false;
  std::size_t lines = 0;
  std::optional<std::size_t> line;  // 1-based first differing line
  std::optional<long> seq;
  std::string detail;
};

/// Re-executes the run named by the header and diffs line by line.
/// SchemaMismatch for an unsupported or missing header.
ReplayReport replay(const std::vector<std::string>& lines);
ReplayReport replay_file(const std::string& path);

std::vector<std::string> read_lines(const std::string& path);

/// JSON view of every model in the store.
ojson dump_models(const ModelStore& store);

/// Latest L6 and L7 report payloads found in a trace.
ojson latest_reports(const std::vector<std::string>& lines);

/// $REFLECT_OUT_DIR or ".".
std::string default_out_dir();

}  // namespace reflect
