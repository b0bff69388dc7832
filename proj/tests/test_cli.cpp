#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>

#include "coevo/experiment.hpp"

using namespace coevo;
namespace fs = std::filesystem;

namespace {

std::string data(const std::string& rel) { return std::string(COEVO_DATA_DIR) + "/" + rel; }

class Sandbox : public ::testing::Test {
 protected:
  fs::path root;

  void SetUp() override {
    static int counter = 0;
    root = fs::temp_directory_path() / ("coevo_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(root);
    fs::create_directories(root);
    ::unsetenv(store_env_var);
  }
  void TearDown() override {
    ::unsetenv(store_env_var);
    fs::remove_all(root);
  }

  fs::path write(const std::string& name, const std::string& text) {
    auto p = root / name;
    std::ofstream(p, std::ios::binary) << text;
    return p;
  }

  fs::path config(const std::string& name, const std::string& env = "ddos", std::size_t reps = 1,
                  const std::string& extra = "") {
    const bool d = env == "ddos";
    return write(name, "[experiment]\nenvironment = " + env + "\nattack_grammar = " +
                           data(d ? "grammars/ddos_attack.bnf" : "grammars/contagion_attack.bnf") +
                           "\ndefense_grammar = " + data(d ? "grammars/ddos_defense.bnf" : "grammars/contagion_defense.bnf") +
                           "\nscenario = " + data(d ? "scenarios/mesh12.txt" : "topologies/two_tier.txt") +
                           "\nrepetitions = " + std::to_string(reps) + "\n" + extra +
                           "\n[evolution]\ngenerations = 4\nattackers = 4\ndefenders = 4\nseed = 10\n");
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

struct Exec {
  int status;
  std::string out;
};

// Runs the command-line tool; stdout and stderr are captured together.
Exec cli(const std::string& args) {
  std::string cmd = std::string(COEVO_CLI_PATH) + " " + args + " 2>&1";
  FILE* p = ::popen(cmd.c_str(), "r");
  std::string out;
  char buf[4096];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, p)) > 0;) out.append(buf, n);
  const int st = ::pclose(p);
  return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, out};
}

std::size_t run_dirs(const fs::path& store) {
  if (!fs::exists(store / "runs")) return 0;
  return std::size_t(std::distance(fs::directory_iterator(store / "runs"), fs::directory_iterator()));
}

}  // namespace

TEST_F(Sandbox, RepetitionsCreateOneRunEach) {
  std::ostringstream out;
  RunOptions opt;
  opt.store = (root / "store").string();
  auto ids = cmd_run(config("c.ini", "ddos", 2), opt, out);
  ASSERT_EQ(ids.size(), 2u);
  EXPECT_EQ(run_dirs(root / "store"), 2u);
  ResultsStore store(root / "store");
  auto index = store.index();
  ASSERT_EQ(index.size(), 2u);
  EXPECT_EQ(index[0].seed, 10u);
  EXPECT_EQ(index[1].seed, 11u);
  for (const auto& id : ids)
    for (const char* f : {"manifest.json", "engagements.jsonl", "generations.jsonl", "archive.jsonl", "attack.bnf",
                          "defense.bnf", "scenario.txt"})
      EXPECT_TRUE(fs::exists(store.run_dir(id) / f)) << f;

  // Re-running the same config adds runs rather than overwriting.
  auto again = cmd_run(config("c.ini", "ddos", 2), opt, out);
  EXPECT_EQ(run_dirs(root / "store"), 4u);
  EXPECT_NE(again[0], ids[0]);
}

TEST_F(Sandbox, ConfigErrorsNameTheProblem) {
  auto expect_error = [&](const fs::path& p, const std::string& needle) {
    try {
      load_experiment_config(p);
      ADD_FAILURE() << "no error for " << needle;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  write("missing.ini", "[experiment]\nenvironment = ddos\nattack_grammar = nowhere.bnf\n");
  expect_error(root / "missing.ini", (root / "nowhere.bnf").string());
  expect_error(config("unknown.ini", "ddos", 1, "colour = red"), "experiment.colour");
  expect_error(write("section.ini", "[extras]\nx = 1\n"), "extras");
  expect_error(write("env.ini", "[experiment]\nenvironment = chess\n"), "experiment.environment");
  expect_error(root / "absent.ini", "absent.ini");
  auto bad = fs::path(config("bad.ini"));
  write("bad.ini", slurp(bad) + "structure = spatial:x:3\n");
  expect_error(root / "bad.ini", "evolution.structure");
}

TEST(ExperimentParse, StructuresAndSelections) {
  EXPECT_EQ(parse_structure("one-vs-one").kind, CompetitionStructure::Kind::one_vs_one);
  EXPECT_EQ(parse_structure("tournament:3").rounds, 3u);
  auto sp = parse_structure("spatial:4:3");
  EXPECT_EQ(sp.grid, 4u);
  EXPECT_EQ(sp.window, 3u);
  EXPECT_THROW(parse_structure("round-robin"), ConfigError);
  EXPECT_THROW(parse_structure("tournament:0"), ConfigError);
  EXPECT_EQ(parse_selection("tournament:5").tournament_size, 5u);
  EXPECT_EQ(parse_selection("truncation:0.25").fraction, 0.25);
  EXPECT_THROW(parse_selection("truncation:lots"), ConfigError);
}

TEST(ExperimentParse, ShippedConfigsLoad) {
  for (const char* f : {"ddos.ini", "ddos_spatial.ini", "contagion.ini"})
    EXPECT_NO_THROW(load_experiment_config(data(std::string("configs/") + f))) << f;
}

TEST_F(Sandbox, StoreRootPrecedence) {
  EXPECT_EQ(resolve_store("", ""), fs::path("results"));
  EXPECT_EQ(resolve_store("", "/from/config"), fs::path("/from/config"));
  ::setenv(store_env_var, "/from/env", 1);
  EXPECT_EQ(resolve_store("", "/from/config"), fs::path("/from/env"));
  EXPECT_EQ(resolve_store("/from/flag", "/from/config"), fs::path("/from/flag"));
}

TEST_F(Sandbox, SameSeedGivesIdenticalRecords) {
  RunOptions a, b;
  a.store = (root / "a").string();
  b.store = (root / "b").string();
  std::ostringstream oa, ob;
  auto ia = cmd_run(config("c.ini", "contagion"), a, oa);
  auto ib = cmd_run(config("c.ini", "contagion"), b, ob);
  ASSERT_EQ(ia, ib);
  EXPECT_EQ(oa.str(), ob.str());
  for (const char* f : {"engagements.jsonl", "generations.jsonl", "archive.jsonl"})
    EXPECT_EQ(slurp(root / "a/runs" / ia[0] / f), slurp(root / "b/runs" / ib[0] / f)) << f;
}

TEST_F(Sandbox, CommandLineMatchesLibrary) {
  auto cfg = config("c.ini");
  RunOptions opt;
  opt.store = (root / "lib").string();
  opt.seed = 3;
  std::ostringstream lib_out;
  auto ids = cmd_run(cfg, opt, lib_out);

  auto r = cli("run --config " + cfg.string() + " --store " + (root / "bin").string() + " --seed 3");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_EQ(r.out, lib_out.str());
  for (const char* f : {"engagements.jsonl", "generations.jsonl", "archive.jsonl"})
    EXPECT_EQ(slurp(root / "lib/runs" / ids[0] / f), slurp(root / "bin/runs" / ids[0] / f)) << f;

  std::ostringstream lib_inspect;
  cmd_inspect((root / "lib").string(), ids[0], lib_inspect);
  auto ri = cli("inspect " + ids[0] + " --store " + (root / "bin").string());
  ASSERT_EQ(ri.status, 0) << ri.out;
  EXPECT_EQ(ri.out, lib_inspect.str());

  EstabloOptions eo;
  eo.store = (root / "lib").string();
  eo.out_dir = root / "lib_report";
  eo.stride = 1;
  std::ostringstream lib_est;
  cmd_establo(eo, lib_est);
  auto re = cli("establo --store " + (root / "bin").string() + " --stride 1 --out " + (root / "bin_report").string());
  ASSERT_EQ(re.status, 0) << re.out;
  for (const char* f : {"rankings.csv", "payoff_same-run.csv", "plot_data.jsonl", "summary.txt"})
    EXPECT_EQ(slurp(root / "lib_report" / f), slurp(root / "bin_report" / f)) << f;
}

TEST_F(Sandbox, InspectTrajectoryReplaysGenerationLog) {
  RunOptions opt;
  opt.store = (root / "s").string();
  opt.quiet = true;
  std::ostringstream sink;
  auto id = cmd_run(config("c.ini"), opt, sink).at(0);
  EXPECT_TRUE(sink.str().empty());
  std::ostringstream out;
  cmd_inspect(opt.store, id, out);
  const auto text = out.str();
  EXPECT_EQ(text.find("created"), std::string::npos);
  EXPECT_NE(text.find("generations 4 of 4"), std::string::npos) << text;

  // Replay: best, mean and variance of each half-step from its population arrays.
  auto steps = load_generations(fs::path(opt.store) / "runs" / id / "generations.jsonl");
  const auto att_dir = parse_direction(load_manifest(fs::path(opt.store) / "runs" / id).at("attacker_direction").get<std::string>());
  std::map<std::pair<std::size_t, int>, std::array<double, 3>> replay;
  for (const auto& s : steps) {
    const bool maximize = s.role == Role::defender || att_dir == Direction::maximize;
    std::vector<double> f;
    for (std::size_t i = 0; i < s.fitness.size(); ++i)
      if (s.valid[i]) f.push_back(s.fitness[i]);
    ASSERT_FALSE(f.empty());
    double best = f[0], mean = 0, var = 0;
    for (double v : f) {
      best = maximize ? std::max(best, v) : std::min(best, v);
      mean += v / double(f.size());
    }
    for (double v : f) var += (v - mean) * (v - mean) / double(f.size());
    replay[{s.generation, int(s.role)}] = {best, mean, var};
  }
  std::istringstream in(text.substr(text.find("trajectory")));
  std::string header;
  std::getline(in, header);
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line); ++lines) {
    std::istringstream ls(line);
    std::size_t t;
    double v[6];
    ls >> t >> v[0] >> v[1] >> v[2] >> v[3] >> v[4] >> v[5];
    ASSERT_TRUE(ls) << line;
    EXPECT_EQ(t, lines + 1);
    const auto& a = replay.at({t, int(Role::attacker)});
    const auto& d = replay.at({t, int(Role::defender)});
    EXPECT_EQ(v[0], a[0]);
    EXPECT_NEAR(v[1], a[1], 1e-12);
    EXPECT_NEAR(v[2], a[2], 1e-12);
    EXPECT_EQ(v[3], d[0]);
    EXPECT_NEAR(v[4], d[1], 1e-12);
    EXPECT_NEAR(v[5], d[2], 1e-12);
  }
  EXPECT_EQ(lines, 4u);
}

TEST_F(Sandbox, UnknownRunAndEmptyStore) {
  EXPECT_THROW(cmd_inspect((root / "none").string(), "deadbeef-s1", std::cout), UnknownRun);
  auto r = cli("inspect deadbeef-s1 --store " + (root / "none").string());
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.out.find("error:"), std::string::npos);
  EXPECT_NE(r.out.find("deadbeef-s1"), std::string::npos);

  EstabloOptions eo;
  eo.store = (root / "none").string();
  eo.out_dir = root / "rep";
  std::ostringstream sink;
  EXPECT_THROW(cmd_establo(eo, sink), EmptyStore);
  EXPECT_NE(cli("establo --store " + (root / "none").string()).status, 0);
}

TEST_F(Sandbox, EstabloWithTwoScenariosHasTwoContexts) {
  RunOptions opt;
  opt.store = (root / "s").string();
  opt.quiet = true;
  std::ostringstream sink;
  cmd_run(config("c.ini", "ddos", 2), opt, sink);
  EstabloOptions eo;
  eo.store = opt.store;
  eo.out_dir = root / "rep";
  eo.scenarios = {data("scenarios/mesh12.txt"), data("scenarios/ring12_test.txt")};
  auto r = cmd_establo(eo, sink);
  ASSERT_EQ(r.matrices.size(), 2u);
  EXPECT_EQ(r.matrices[0].context, "mesh12");
  EXPECT_EQ(r.matrices[1].context, "ring12_test");
  EXPECT_TRUE(fs::exists(root / "rep" / "payoff_mesh12.csv"));
  EXPECT_TRUE(fs::exists(root / "rep" / "payoff_ring12_test.csv"));
  std::set<std::string> contexts;
  std::ifstream in(root / "rep" / "rankings.csv");
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) contexts.insert(line.substr(0, line.find(',')));
  EXPECT_EQ(contexts, (std::set<std::string>{"mesh12", "ring12_test"}));

  // Scenarios of another environment cannot be used.
  eo.scenarios = {data("topologies/star.txt")};
  EXPECT_THROW(cmd_establo(eo, sink), Error);
}

TEST_F(Sandbox, ValidateGrammar) {
  auto ok = cli("validate-grammar " + data("grammars/ddos_defense.bnf"));
  EXPECT_EQ(ok.status, 0) << ok.out;
  EXPECT_NE(ok.out.find("ok"), std::string::npos);
  auto bad = write("bad.bnf", "<s> ::= a\n<t> b\n");
  auto r = cli("validate-grammar " + bad.string());
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.out.find("line 2"), std::string::npos) << r.out;
  EXPECT_NE(cli("validate-grammar " + (root / "absent.bnf").string()).status, 0);
  EXPECT_NE(cli("frobnicate").status, 0);
}
