#include "support.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>

using namespace reflect;
namespace fs = std::filesystem;

namespace {

Scenario load(const char* name) { return Scenario::load(reflect::test::scenario_path(name)); }

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("reflect-test-" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(REFLECT_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) { return read_file(p.string()); }

const std::vector<const char*> kBundled{"forbidden-field", "sanction-school", "signpost",
                                        "trap",            "corridor-rescue", "intervention-drill"};

}  // namespace

TEST(ScenarioFile, BundledScenariosParse) {
  for (const char* name : kBundled) {
    const auto sc = load(name);
    EXPECT_EQ(sc.name, name);
    EXPECT_FALSE(sc.run.seeds.empty());
  }
}

TEST(ScenarioFile, RejectsUnknownKeysAndBadReferences) {
  const std::string base = reflect::test::open_grid(3, 3, {1, 1});
  EXPECT_THROW(Scenario::parse(base + "[twin]\nfidelty = 1\n"), ConfigError);
  EXPECT_THROW(Scenario::parse(base + "[bogus]\n"), ConfigError);
  EXPECT_THROW(Scenario::parse(base + "[norms]\nP = prohibition agent_in_zone(Q) severity=1\n"), ConfigError);
  EXPECT_THROW(Scenario::parse(base + "[twin]\nfidelity = 1.5\n"), ConfigError);
  EXPECT_THROW(Scenario::parse(base + "[run]\nseeds =\n"), ConfigError);
  EXPECT_THROW(Scenario::parse(base + "[inference]\ns_min = 0\n"), ConfigError);
  EXPECT_NO_THROW(Scenario::parse(base + "[twin]\nfidelity = 0.5\n"));
}

TEST(ScenarioFile, ListParsers) {
  EXPECT_EQ(parse_seed_list("1..4"), (std::vector<std::uint64_t>{1, 2, 3, 4}));
  EXPECT_EQ(parse_seed_list("3,1"), (std::vector<std::uint64_t>{3, 1}));
  EXPECT_EQ(parse_int_list("0,1,4"), (std::vector<int>{0, 1, 4}));
  EXPECT_THROW(parse_seed_list("4..1"), ConfigError);
  EXPECT_THROW(parse_int_list("a"), ConfigError);
}

TEST(Compare, RowsForEveryTierAndSeed) {
  const auto sc = load("forbidden-field");
  const auto rows = compare(sc, {0, 1}, {1, 2, 3}, 500);
  ASSERT_EQ(rows.size(), 6u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(rows[i].tier, 0);
    EXPECT_EQ(rows[i + 3].tier, 1);
    EXPECT_EQ(rows[i].seed, rows[i + 3].seed);
    EXPECT_LE(rows[i + 3].metrics.violations, rows[i].metrics.violations);
  }
  const auto csv = compare_csv(sc.name, rows);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
  EXPECT_THROW(compare(sc, {1}, {1}, 10), ConfigError);
  EXPECT_THROW(compare(sc, {1, 1}, {1, 2}, 10), ConfigError);
}

TEST(Compare, HarmsPreventedAgainstTheSameSeed) {
  const auto rows = compare(load("corridor-rescue"), {0, 3}, {1, 2}, 300);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(rows[i].harms_prevented, 0);
    EXPECT_EQ(rows[i + 2].harms_prevented, rows[i].metrics.harms - rows[i + 2].metrics.harms);
  }
}

TEST(Metrics, TrailerIsRecomputableFromTheTrace) {
  for (const char* name : kBundled) {
    MemorySink sink;
    RunOptions opt;
    opt.tier = 3;
    opt.seed = 2;
    opt.steps = 800;
    run_scenario(load(name), opt, sink);
    const auto trailer = nlohmann::ordered_json::parse(sink.lines.back());
    ASSERT_EQ(trailer["kind"], "metrics");
    EXPECT_EQ(metrics_from_lines(sink.lines).to_json(), trailer["metrics"]) << name;
  }
}

TEST(Replay, VerifiesAndLocatesTampering) {
  MemorySink sink;
  RunOptions opt;
  opt.tier = 2;
  opt.seed = 3;
  opt.steps = 200;
  run_scenario(load("signpost"), opt, sink);
  EXPECT_TRUE(replay(sink.lines).ok);

  auto tampered = sink.lines;
  const std::size_t victim = 40;
  auto& line = tampered[victim];
  const auto pos = line.find("\"payload\":{") + 12;
  line[pos] = line[pos] == 'a' ? 'b' : 'a';
  const auto r = replay(tampered);
  EXPECT_FALSE(r.ok);
  EXPECT_EQ(r.line, victim + 1);
  EXPECT_EQ(r.seq, nlohmann::json::parse(sink.lines[victim])["seq"].get<long>());

  auto old = sink.lines;
  const auto at = old[0].find("reflect-trace/1");
  old[0].replace(at, 15, "reflect-trace/0");
  EXPECT_THROW(replay(old), SchemaMismatch);
  EXPECT_THROW(replay({}), SchemaMismatch);
}

TEST(Cli, RunWritesADeterministicTrace) {
  const auto a = scratch("a.jsonl"), b = scratch("b.jsonl");
  const std::string common = "run --scenario " + reflect::test::scenario_path("trap") + " --tier 3 --seed 4 --steps 400";
  ASSERT_EQ(cli(common + " --trace " + a.string()), 0);
  ASSERT_EQ(cli(common + " --trace " + b.string()), 0);
  EXPECT_TRUE(fs::exists(a));
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_EQ(cli("replay --trace " + a.string()), 0);
  EXPECT_EQ(cli("query --trace " + a.string()), 0);
}

TEST(Cli, ExitCodes) {
  const auto scn = reflect::test::scenario_path("forbidden-field");
  EXPECT_EQ(cli("run --scenario " + scn + " --tier 7 --steps 5 --trace " + scratch("x.jsonl").string()), 2);
  EXPECT_EQ(cli("run --scenario /nonexistent.scn --tier 1"), 2);
  EXPECT_EQ(cli("validate --scenario " + scn), 0);
  EXPECT_EQ(cli("compare --scenario " + scn + " --tiers 1 --seeds 1 --steps 5 --out " + scratch("c.csv").string()),
            2);
  EXPECT_EQ(cli("bogus"), 2);
  const auto bad = scratch("bad.jsonl");
  std::ofstream(bad) << "{\"schema\":\"reflect-trace/0\",\"kind\":\"header\"}\n";
  EXPECT_EQ(cli("replay --trace " + bad.string()), 2);
}

TEST(Cli, CompareWritesOneRowPerRun) {
  const auto csv = scratch("cmp.csv");
  ASSERT_EQ(cli("compare --scenario " + reflect::test::scenario_path("forbidden-field") +
                " --tiers 0,1 --seeds 1..3 --steps 200 --out " + csv.string()),
            0);
  const auto text = slurp(csv);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 7);
  EXPECT_EQ(text.rfind("scenario,tier,seed", 0), 0u);
}

TEST(Cli, InjectAppendsAControlLineThatRunsConsume) {
  const auto control = scratch("control.txt");
  fs::remove(control);
  ASSERT_EQ(cli("inject --norm 'P3:prohibition:agent_in_zone(Z1):3' --at 100 --control " + control.string()), 0);
  ASSERT_EQ(cli("inject --goal 'task_reward 2' --at 120 --control " + control.string()), 0);
  EXPECT_EQ(cli("inject --norm broken --at 1 --control " + control.string()), 2);
  const auto lines = read_lines(control.string());
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(Injection::parse(lines[0]).step, 100);

  const auto trace = scratch("inj.jsonl");
  ASSERT_EQ(cli("run --scenario " + reflect::test::scenario_path("forbidden-field") +
                " --tier 2 --seed 1 --steps 150 --control " + control.string() + " --trace " + trace.string()),
            0);
  int injections = 0;
  for (const auto& l : read_lines(trace.string())) {
    const auto j = nlohmann::json::parse(l);
    if (j.value("kind", "") != "integrate_design_goal") continue;
    ++injections;
    EXPECT_EQ(j["loop"], "L4");
  }
  EXPECT_EQ(injections, 2);
  EXPECT_EQ(cli("replay --trace " + trace.string()), 0);
}

TEST(Cli, CheckpointAndModelDump) {
  const auto ckpt = scratch("policy.json"), models = scratch("models.json");
  ASSERT_EQ(cli("run --scenario " + reflect::test::scenario_path("sanction-school") +
                " --tier 2 --seed 1 --steps 300 --trace " + scratch("m.jsonl").string() + " --checkpoint-out " +
                ckpt.string() + " --dump-models " + models.string()),
            0);
  EXPECT_NO_THROW(Policy::from_checkpoint(slurp(ckpt)));
  const auto dump = nlohmann::json::parse(slurp(models));
  EXPECT_TRUE(dump.contains("transitions"));
  EXPECT_TRUE(dump.contains("norms"));
}
