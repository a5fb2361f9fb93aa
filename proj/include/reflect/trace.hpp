#pragma once

// Trace stream: JSON Lines records for every loop activation, canonical
// serialization of domain values, sinks, and the metrics derived purely from
// trace records.

#include <fstream>
#include <json.hpp>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "reflect/governance.hpp"
#include "reflect/learning.hpp"
#include "reflect/loops.hpp"

namespace reflect {

using ojson = nlohmann::ordered_json;

inline constexpr std::string_view kTraceSchema = "reflect-trace/1";

ojson to_json(Coord c);  // [x, y], null when removed
ojson to_json(const StateKey& k);
ojson to_json(const StepEvent& e);
ojson to_json(const std::vector<StepEvent>& events);
ojson to_json(const NpcMove& m);
ojson to_json(const Violation& v);
ojson to_json(const Verdict& v);
ojson to_json(const Rollout& r);  // digest form
ojson to_json(const Hypothesis& h);
ojson to_json(const NormChange& c);
ojson to_json(const ProgressReport& r);
ojson to_json(const LearnerReport& r);
ojson to_json(const Inconsistency& i);
ojson to_json(const Rule& r);
ojson to_json(const RuleSetModel& rs);
ojson to_json(const GoalRevision& g);
ojson plan_json(std::span<const Action> plan);

/// Inverse of to_json(Coord).
Coord coord_from_json(const ojson& j);

class TraceSink {
 public:
  virtual ~TraceSink() = default;
  virtual void write(const std::string& line) = 0;
  /// Sinks that drop every line let the tracer skip serialization.
  virtual bool discards() const { return false; }
};

class NullSink final : public TraceSink {
 public:
  void write(const std::string&) override {}
  bool discards() const override { return true; }
};

class MemorySink final : public TraceSink {
 public:
  void write(const std::string& line) override { lines.push_back(line); }
  std::vector<std::string> lines;
};

class FileSink final : public TraceSink {
 public:
  explicit FileSink(const std::string& path);  // throws Error when unwritable
  void write(const std::string& line) override;

 private:
  std::ofstream out_;
};

struct TraceHeader {
  std::string scenario;  // scenario file text
  std::string control;   // control-channel text
  int tier = 0;
  std::uint64_t seed = 0;
  long steps = 0;

  ojson to_json() const;
  static TraceHeader from_json(const ojson& j);  // SchemaMismatch on wrong schema
};

/// Figures recomputable by scanning trace records.
struct Metrics {
  long steps = 0;
  int episodes = 0;
  long violations = 0;
  std::map<std::string, long> violations_by_norm;
  long blocks = 0;
  long compromises = 0;
  long harms = 0;
  double total_reward = 0.0;
  struct Promotion {
    std::string norm;
    long tick = 0;
    long latency = 0;
  };
  std::vector<Promotion> promotions;
  long demotions = 0;
  struct SignIntegration {
    std::string norm;
    long latency = 0;
  };
  std::vector<SignIntegration> sign_integrations;
  int stuck_detections = 0;
  std::vector<std::pair<int, double>> coverage_curve;
  std::map<std::string, long> proposals;

  void observe(const ojson& record);
  ojson to_json() const;
};

/// Single serialized writer. Assigns strictly increasing seq numbers and
/// refuses events from loops the tier does not enable.
class Tracer {
 public:
  Tracer(TraceSink& sink, std::uint64_t seed, TierConfig tier);

  void header(const TraceHeader& h);
  long emit(LoopId loop, std::optional<KolbPhase> phase, std::string_view kind, long step, int episode,
            ojson payload);
  void trailer();

  const Metrics& metrics() const { return metrics_; }
  long events() const { return seq_; }

 private:
  TraceSink& sink_;
  std::uint64_t seed_;
  TierConfig tier_;
  long seq_ = 0;
  Metrics metrics_;
};

/// Metrics recomputed from trace lines (header and trailer are skipped).
Metrics metrics_from_lines(const std::vector<std::string>& lines);

}  // namespace reflect
