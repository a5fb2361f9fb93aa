// reflect: command-line front door for scenario runs, tier comparisons,
// trace replay and the Loop 4 control channel.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "reflect/harness.hpp"

namespace fs = std::filesystem;
using namespace reflect;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
}

std::string read_optional(const std::string& path) { return path.empty() ? std::string() : read_file(path); }

void print_summary(const Metrics& m) {
  std::cout << "steps " << m.steps << "  episodes " << m.episodes << "  violations " << m.violations << "  blocks "
            << m.blocks << "  compromises " << m.compromises << "  harms " << m.harms << "  reward "
            << ojson(m.total_reward).dump() << "  norms_inferred " << m.promotions.size() << "  stuck "
            << m.stuck_detections << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reflective agent simulator"};
  app.require_subcommand(1);

  std::string scenario, trace, control, out, checkpoint_out, models_out, tiers_s, seeds_s, norm_s, goal_s, switch_s;
  std::optional<int> tier;
  std::optional<std::uint64_t> seed;
  std::optional<long> steps;
  long at = 0;

  auto* run = app.add_subcommand("run", "run one scenario with one tier and seed");
  run->add_option("--scenario", scenario, "scenario file")->required();
  run->add_option("--tier", tier, "tier 0..4 (default: scenario)");
  run->add_option("--seed", seed, "seed (default: first scenario seed)");
  run->add_option("--steps", steps, "steps to run (default: scenario)");
  run->add_option("--trace", trace, "trace output (default: $REFLECT_OUT_DIR/<name>-t<tier>-s<seed>.jsonl)");
  run->add_option("--control", control, "control-channel file with injections");
  run->add_option("--checkpoint-out", checkpoint_out, "write the final policy checkpoint");
  run->add_option("--dump-models", models_out, "write the final models as JSON");

  auto* cmp = app.add_subcommand("compare", "run several tiers over several seeds");
  cmp->add_option("--scenario", scenario, "scenario file")->required();
  cmp->add_option("--tiers", tiers_s, "tiers, e.g. 0,1,3 or 0..4")->required();
  cmp->add_option("--seeds", seeds_s, "seeds, e.g. 1..20 (default: scenario)");
  cmp->add_option("--steps", steps, "steps per run (default: scenario)");
  cmp->add_option("--out", out, "CSV output (default: $REFLECT_OUT_DIR/<name>-compare.csv)");
  cmp->add_option("--control", control, "control-channel file with injections");

  auto* rep = app.add_subcommand("replay", "re-run a trace and compare byte for byte");
  rep->add_option("--trace", trace, "trace file")->required();

  auto* val = app.add_subcommand("validate", "check a scenario file");
  val->add_option("--scenario", scenario, "scenario file")->required();

  auto* inj = app.add_subcommand("inject", "append a Loop 4 injection to a control file");
  inj->add_option("--norm", norm_s, "norm spec ID:KIND:PREDICATE:SEVERITY");
  inj->add_option("--goal", goal_s, "goal weight 'ID WEIGHT'");
  inj->add_option("--switch", switch_s, "learning strategy to switch to");
  inj->add_option("--at", at, "step at which to inject")->required();
  inj->add_option("--control", control, "control file (default: $REFLECT_OUT_DIR/control.txt)");

  auto* qry = app.add_subcommand("query", "print the latest progress and learner reports of a trace");
  qry->add_option("--trace", trace, "trace file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) {
      const Scenario sc = Scenario::load(scenario);
      RunOptions opt;
      opt.tier = tier.value_or(sc.run.tier);
      opt.seed = seed.value_or(sc.run.seeds.front());
      opt.steps = steps.value_or(sc.run.steps);
      opt.control = read_optional(control);
      opt.want_checkpoint = !checkpoint_out.empty();
      opt.want_models = !models_out.empty();
      TierConfig::for_tier(opt.tier);
      if (trace.empty()) {
        trace = (fs::path(default_out_dir()) / (sc.name + "-t" + std::to_string(opt.tier) + "-s" +
                                                std::to_string(opt.seed) + ".jsonl"))
                    .string();
      }
      // Validate fully before touching the output file.
      sc.engine_for(opt.tier, opt.seed, parse_control(opt.control));
      FileSink sink(trace);
      const RunResult r = run_scenario(sc, opt, sink);
      if (opt.want_checkpoint) write_text(checkpoint_out, r.checkpoint);
      if (opt.want_models) write_text(models_out, r.models);
      print_summary(r.metrics);
      std::cout << "trace " << trace << '\n';
      return 0;
    }
    if (cmp->parsed()) {
      const Scenario sc = Scenario::load(scenario);
      const auto tiers = parse_int_list(tiers_s);
      const auto seeds = seeds_s.empty() ? sc.run.seeds : parse_seed_list(seeds_s);
      const auto rows = compare(sc, tiers, seeds, steps.value_or(sc.run.steps), read_optional(control));
      if (out.empty()) out = (fs::path(default_out_dir()) / (sc.name + "-compare.csv")).string();
      write_text(out, compare_csv(sc.name, rows));
      std::cout << compare_table(rows) << "rows " << rows.size() << "  csv " << out << '\n';
      return 0;
    }
    if (rep->parsed()) {
      const ReplayReport r = replay_file(trace);
      if (r.ok) {
        std::cout << "OK " << r.lines << " lines\n";
        return 0;
      }
      std::cout << "DIVERGED at line " << *r.line;
      if (r.seq) std::cout << " (seq " << *r.seq << ")";
      std::cout << ": " << r.detail << '\n';
      return 1;
    }
    if (val->parsed()) {
      const Scenario sc = Scenario::load(scenario);
      std::cout << "OK " << sc.name << ' ' << sc.grid->width << 'x' << sc.grid->height << ", " << sc.grid->norms.size()
                << " norms, " << sc.grid->npcs.size() << " npcs, " << sc.grid->signs.size() << " signs\n";
      return 0;
    }
    if (inj->parsed()) {
      const int given = !norm_s.empty() + !goal_s.empty() + !switch_s.empty();
      if (given != 1) throw ConfigError("inject needs exactly one of --norm, --goal, --switch");
      std::string line = std::to_string(at) + " = ";
      if (!norm_s.empty()) line += "norm " + norm_s;
      if (!goal_s.empty()) line += "goal " + goal_s;
      if (!switch_s.empty()) line += "switch " + switch_s;
      Injection::parse(line);
      if (control.empty()) control = (fs::path(default_out_dir()) / "control.txt").string();
      std::ofstream f(control, std::ios::app);
      if (!f) throw Error("cannot append to '" + control + "'");
      f << line << '\n';
      std::cout << line << '\n';
      return 0;
    }
    if (qry->parsed()) {
      std::cout << latest_reports(read_lines(trace)).dump(2) << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const SchemaMismatch& e) {
    std::cerr << "schema mismatch: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
